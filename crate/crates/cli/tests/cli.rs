use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use specfield::io::read_field;
use specfield_cli::commands::{LOG_SPECTRUM_FILE, MASK_FILE, PHI_FILE, TRUTH_FILE, UNCERTAINTY_FILE};
use specfield_cli::RunManifest;
use tempfile::TempDir;

const SMALL_OSCILLATOR: &str = r#"
case = "oscillator1d"

[[grid]]
n_points = 128
length = 1.0

[[mask.intervals]]
lo = [0.3]
hi = [0.45]
"#;

fn specfield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specfield"))
        .args(args)
        .env("SPECFIELD_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = specfield(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn synth(dir: &Path, config: &str, name: &str) -> PathBuf {
    let cfg = write_config(dir, &format!("{name}.toml"), config);
    let out = dir.join(name);
    ok(&["synth", "--config", p(&cfg), "--out", p(&out)]);
    out
}

fn hashes(dir: &Path) -> Vec<(String, String)> {
    let m = RunManifest::load(dir).unwrap();
    assert!(m.stale_files(dir).is_empty());
    m.files.into_iter().map(|f| (f.name, f.sha256)).collect()
}

fn rows(csv: &str) -> Vec<Vec<f64>> {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let a = synth(tmp.path(), SMALL_OSCILLATOR, "a");
    let b = synth(tmp.path(), SMALL_OSCILLATOR, "b");
    assert_eq!(hashes(&a), hashes(&b));
    let (fa, fb) = (tmp.path().join("fa"), tmp.path().join("fb"));
    ok(&["fit", p(&a), "--mode", "perfect", "--out", p(&fa)]);
    ok(&["fit", p(&b), "--mode", "perfect", "--out", p(&fb)]);
    assert_eq!(hashes(&fa), hashes(&fb));

    let c = tmp.path().join("c");
    let cfg = tmp.path().join("a.toml");
    ok(&["synth", "--config", p(&cfg), "--out", p(&c), "--seed-override", "99"]);
    assert_ne!(hashes(&a), hashes(&c));
}

#[test]
fn edited_outputs_are_reported_stale() {
    let tmp = TempDir::new().unwrap();
    let a = synth(tmp.path(), SMALL_OSCILLATOR, "a");
    let m = RunManifest::load(&a).unwrap();
    let mut bytes = fs::read(a.join(PHI_FILE)).unwrap();
    bytes[0] ^= 1;
    fs::write(a.join(PHI_FILE), bytes).unwrap();
    assert_eq!(m.stale_files(&a), vec![PHI_FILE.to_string()]);
}

#[test]
fn exit_codes_separate_usage_from_numerical_failures() {
    let tmp = TempDir::new().unwrap();
    let bogus = write_config(tmp.path(), "bogus.toml", "case = \"bogus\"\n");
    let out = tmp.path().join("x");
    assert_eq!(specfield(&["synth", "--config", p(&bogus), "--out", p(&out)]).status.code(), Some(2));
    let missing = tmp.path().join("nothing");
    assert_eq!(
        specfield(&["fit", p(&missing), "--mode", "perfect", "--out", p(&out)]).status.code(),
        Some(2)
    );
    let negative = write_config(
        tmp.path(),
        "negative.toml",
        "case = \"custom\"\nnoise_sigma = 1.0\n[[grid]]\nn_points = 4\nlength = 1.0\n\
         [spectrum]\nkind = \"explicit\"\nvalues = [1.0, -1.0, 1.0, -1.0]\n\
         [hyper]\nsigma = 1.0\nmu = 1.0\n",
    );
    assert_eq!(specfield(&["synth", "--config", p(&negative), "--out", p(&out)]).status.code(), Some(3));
    assert_eq!(specfield(&["fit"]).status.code(), Some(2));
}

#[test]
fn slices_pick_the_requested_row() {
    let tmp = TempDir::new().unwrap();
    let cfg = "case = \"custom\"\nnoise_sigma = 0.5\n[[grid]]\nn_points = 8\nlength = 1.0\n\
               [[grid]]\nn_points = 6\nlength = 3.0\n[spectrum]\nkind = \"structured\"\n\
               m2 = 1.1\nalpha = 0.0025\nbeta = 0.0011\ngamma = 0.002\nrho = 0.004\n\
               [hyper]\nsigma = 1.0\nmu = 1.0\n";
    let b = synth(tmp.path(), cfg, "b");
    let phi = read_field(&b.join(PHI_FILE)).unwrap();
    let v = phi.values();

    let at_t3 = rows(&ok(&["slice", p(&b.join(PHI_FILE)), "--axis", "0", "--index", "3"]));
    assert_eq!(at_t3.len(), 6);
    for (j, row) in at_t3.iter().enumerate() {
        assert_eq!(row[0] as usize, j);
        assert!((row[1] - (-1.5 + 0.5 * j as f64)).abs() < 1e-12);
        assert_eq!(row[2], v[3 * 6 + j]);
    }
    let at_x5 = rows(&ok(&["slice", p(&b.join(PHI_FILE)), "--axis", "1", "--index", "5"]));
    assert_eq!(at_x5.len(), 8);
    for (i, row) in at_x5.iter().enumerate() {
        assert_eq!(row[2], v[i * 6 + 5]);
    }
    let bad = specfield(&["slice", p(&b.join(PHI_FILE)), "--axis", "2", "--index", "0"]);
    assert_eq!(bad.status.code(), Some(2));
    let bad = specfield(&["slice", p(&b.join(PHI_FILE)), "--axis", "0", "--index", "8"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn spectrum_dump_lists_modes_in_signed_order() {
    let tmp = TempDir::new().unwrap();
    let b = synth(tmp.path(), SMALL_OSCILLATOR, "b");
    let dump = rows(&ok(&["spectrum-dump", p(&b.join(TRUTH_FILE))]));
    assert_eq!(dump.len(), 128);
    for (i, row) in dump.iter().enumerate() {
        assert_eq!(row[0] as i64, i as i64 - 64);
        assert!((row[1] - 2.0 * std::f64::consts::PI * row[0]).abs() < 1e-9);
        assert!(row[2] > 0.0);
    }
    let refused = specfield(&["spectrum-dump", p(&b.join(PHI_FILE))]);
    assert_eq!(refused.status.code(), Some(2));
}

fn log_spectrum(dir: &Path) -> Vec<f64> {
    specfield::io::read_binary(&dir.join(LOG_SPECTRUM_FILE)).unwrap().1
}

#[test]
fn nearly_noiseless_marginal_fit_matches_perfect_fit() {
    let tmp = TempDir::new().unwrap();
    let cfg = "case = \"oscillator1d\"\nnoise_sigma = 1e-4\nmask = {}\n[[grid]]\nn_points = 64\nlength = 1.0\n";
    let b = synth(tmp.path(), cfg, "b");
    let (fp, fm) = (tmp.path().join("fp"), tmp.path().join("fm"));
    ok(&["fit", p(&b), "--mode", "perfect", "--out", p(&fp)]);
    ok(&["fit", p(&b), "--mode", "marginal", "--out", p(&fm)]);
    let (sp, sm) = (log_spectrum(&fp), log_spectrum(&fm));
    let worst = sp.iter().zip(&sm).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-2, "{worst}");
}

#[test]
fn reconstruction_is_less_certain_in_gaps() {
    let tmp = TempDir::new().unwrap();
    let b = synth(tmp.path(), SMALL_OSCILLATOR, "b");
    let (f, r) = (tmp.path().join("f"), tmp.path().join("r"));
    ok(&["fit", p(&b), "--mode", "marginal", "--out", p(&f)]);
    ok(&["reconstruct", p(&b), p(&f), "--out", p(&r)]);
    let mask = read_field(&b.join(MASK_FILE)).unwrap();
    let unc = read_field(&r.join(UNCERTAINTY_FILE)).unwrap();
    let (m, u) = (mask.values(), unc.values());
    let hidden = (0..128).filter(|&i| m[i] == 0.0).map(|i| u[i]).fold(f64::INFINITY, f64::min);
    let seen = (0..128).filter(|&i| m[i] == 1.0).map(|i| u[i]).fold(0.0, f64::max);
    assert!(hidden > seen, "{hidden} vs {seen}");
    let m = RunManifest::load(&r).unwrap();
    assert!(m.inputs.contains_key("bundle_config") && m.inputs.contains_key("tau"));
    assert!(!m.notes.is_empty());
}
