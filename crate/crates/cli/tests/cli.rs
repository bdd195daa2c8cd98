use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_keyetm"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn keyetm")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

const CONFIG: &str = r#"
[paths]
corpus = "corpus.jsonl"
seeds = "seeds.json"
output_dir = "out"

[preprocess]
min_df = 0.0
max_df = 1.0

[skipgram]
dim = 20
epochs = 2

[train]
epochs = 4
hidden_size = 32
early_stop_patience = 20
"#;

/// Synthetic corpus, seeds and a small config, preprocessed and embedded.
struct Fixture {
    _tmp: tempfile::TempDir,
    dir: PathBuf,
    cfg: String,
}

impl Fixture {
    fn new(seed: u64) -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().to_path_buf();
        ok(&["synth", dir.to_str().unwrap(), "--seed", &seed.to_string()]);
        std::fs::write(dir.join("run.toml"), CONFIG).unwrap();
        let cfg = dir.join("run.toml").to_str().unwrap().to_string();
        let f = Self { _tmp: tmp, dir, cfg };
        ok(&["preprocess", f.cfg()]);
        ok(&["embed", f.cfg()]);
        f
    }

    fn cfg(&self) -> &str {
        &self.cfg
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.join("out").join(name)
    }
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn toy_preprocess_writes_stemmed_vocabulary() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let docs = [
        ("a", "Running runners run quickly", "sport"),
        ("b", "The runner was running", "sport"),
        ("c", "Connected connections connect", "tech"),
        ("d", "Connecting the connection", "tech"),
        ("e", "of the and", "none"),
    ];
    let mut f = std::fs::File::create(d.join("corpus.jsonl")).unwrap();
    for (id, text, label) in docs {
        writeln!(f, "{}", serde_json::json!({"id": id, "text": text, "label": label})).unwrap();
    }
    std::fs::write(d.join("run.toml"), CONFIG).unwrap();
    let stdout = ok(&["preprocess", d.join("run.toml").to_str().unwrap()]);
    assert!(stdout.contains("4 kept, 1 dropped"), "{stdout}");

    let vocab = std::fs::read_to_string(d.join("out/vocab.txt")).unwrap();
    let terms: Vec<&str> = vocab.lines().collect();
    for t in ["run", "runner", "connect", "quickli"] {
        assert!(terms.contains(&t), "{t} missing from {terms:?}");
    }
    assert!(!terms.contains(&"the"));
    let bow = std::fs::read_to_string(d.join("out/bow.jsonl")).unwrap();
    assert_eq!(bow.lines().count(), 4);
    let first: Value = serde_json::from_str(bow.lines().next().unwrap()).unwrap();
    assert_eq!(first["id"], "a");
    let run_idx = terms.iter().position(|&t| t == "run").unwrap() as u64;
    let run_count = first["counts"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c[0] == run_idx)
        .unwrap()[1]
        .as_u64();
    assert_eq!(run_count, Some(2));

    let manifest: Value = serde_json::from_slice(&read(&d.join("out/manifest.json"))).unwrap();
    let outputs = &manifest["stages"]["preprocess"]["outputs"];
    assert_eq!(outputs["vocab.txt"].as_str().unwrap().len(), 64);
    assert!(!d.join("out/.lock").exists());
}

#[test]
fn malformed_corpus_line_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(
        d.join("corpus.jsonl"),
        "{\"id\":\"a\",\"text\":\"hello world\"}\n{\"id\":\"b\",\"text\":\"again\"}\n{\"id\": oops}\n",
    )
    .unwrap();
    std::fs::write(d.join("run.toml"), CONFIG).unwrap();
    let out = run(&["preprocess", d.join("run.toml").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn missing_config_is_an_input_error() {
    let out = run(&["preprocess", "/nonexistent/run.toml"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn rerunning_a_stage_reproduces_its_outputs() {
    let f = Fixture::new(3);
    let names = ["vocab.txt", "vocab.meta.json", "bow.jsonl", "tokens.jsonl", "embeddings.txt", "embeddings.report.json"];
    let before: Vec<Vec<u8>> = names.iter().map(|n| read(&f.out(n))).collect();
    ok(&["preprocess", f.cfg()]);
    ok(&["embed", f.cfg()]);
    for (n, b) in names.iter().zip(&before) {
        assert_eq!(&read(&f.out(n)), b, "{n} changed on rerun");
    }
    ok(&["train", f.cfg()]);
}

#[test]
fn deterministic_training_is_bit_identical() {
    let f = Fixture::new(0);
    ok(&["train", f.cfg(), "--deterministic"]);
    let a = read(&f.out("model.ketm"));
    let theta_a = read(&f.out("theta.tsv"));
    ok(&["train", f.cfg(), "--deterministic"]);
    assert_eq!(a, read(&f.out("model.ketm")));
    assert_eq!(theta_a, read(&f.out("theta.tsv")));
    ok(&["train", f.cfg(), "--deterministic", "--seed", "5"]);
    assert_ne!(a, read(&f.out("model.ketm")));
}

#[test]
fn unguided_equals_zero_lambdas() {
    let f = Fixture::new(0);
    ok(&["train", f.cfg(), "--unguided"]);
    let a = read(&f.out("model.ketm"));
    ok(&["train", f.cfg(), "--lambda1", "0", "--lambda2", "0"]);
    assert_eq!(a, read(&f.out("model.ketm")));
    let log = std::fs::read_to_string(f.out("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 4);
    for line in log.lines() {
        let r: Value = serde_json::from_str(line).unwrap();
        assert_eq!(r["l_mu"], 0.0);
        assert_eq!(r["total"], r["neg_elbo"]);
    }
}

#[test]
fn edited_vocabulary_is_stale() {
    let f = Fixture::new(0);
    let mut v = std::fs::OpenOptions::new().append(true).open(f.out("vocab.txt")).unwrap();
    writeln!(v, "zzzzz").unwrap();
    let out = run(&["train", f.cfg()]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn rerun_upstream_makes_downstream_stale() {
    let f = Fixture::new(0);
    let corpus = f.dir.join("corpus.jsonl");
    let text = std::fs::read_to_string(&corpus).unwrap();
    let fewer: String = text.lines().take(300).map(|l| format!("{l}\n")).collect();
    std::fs::write(&corpus, fewer).unwrap();
    ok(&["preprocess", f.cfg()]);
    let out = run(&["train", f.cfg()]);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("rerun 'embed'"));
    ok(&["embed", f.cfg()]);
    ok(&["train", f.cfg()]);
}

#[test]
fn foreign_checkpoint_is_a_mismatch() {
    let a = Fixture::new(0);
    let b = Fixture::new(1);
    ok(&["train", a.cfg()]);
    let model = a.out("model.ketm");
    let out = run(&["topics", b.cfg(), "--model", model.to_str().unwrap()]);
    assert_eq!(code(&out), 5, "{}", String::from_utf8_lossy(&out.stderr));

    std::fs::write(b.out("model.ketm"), b"KETMgarbage").unwrap();
    let out = run(&["topics", b.cfg(), "--model", b.out("model.ketm").to_str().unwrap()]);
    assert_eq!(code(&out), 5);
}

#[test]
fn topics_eval_and_infer_agree_with_training_outputs() {
    let f = Fixture::new(0);
    ok(&["train", f.cfg()]);

    let json: Value = serde_json::from_str(&ok(&["topics", f.cfg(), "--json", "--top", "7"])).unwrap();
    let topics = json.as_array().unwrap();
    assert_eq!(topics.len(), 3);
    for (k, t) in topics.iter().enumerate() {
        assert_eq!(t["topic"], k);
        assert_eq!(t["name"], format!("topic{k}"));
        assert_eq!(t["words"].as_array().unwrap().len(), 7);
        let w: Vec<f64> = t["weights"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        assert!(w.windows(2).all(|p| p[0] >= p[1]));
    }
    let table = ok(&["topics", f.cfg()]);
    assert_eq!(table.lines().count(), 3);

    ok(&["eval", f.cfg()]);
    let m: Value = serde_json::from_slice(&read(&f.out("metrics.json"))).unwrap();
    let (c, d, q) = (
        m["coherence"].as_f64().unwrap(),
        m["diversity"].as_f64().unwrap(),
        m["quality"].as_f64().unwrap(),
    );
    assert!((q - c * d).abs() < 1e-12);
    assert!((0.0..=1.0).contains(&d) && (-1.0..=1.0).contains(&c));
    let cls: Value = serde_json::from_slice(&read(&f.out("classification.json"))).unwrap();
    assert_eq!(cls["mapping_source"], "suggested");
    assert_eq!(cls["evaluated"], 600);

    let mut child = bin()
        .args(["infer", f.cfg()])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(&read(&f.dir.join("corpus.jsonl")))
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let inferred = String::from_utf8(out.stdout).unwrap();
    let stored = std::fs::read_to_string(f.out("theta.tsv")).unwrap();
    assert_eq!(inferred.lines().count(), stored.lines().count());
    for (a, b) in inferred.lines().zip(stored.lines()).skip(1) {
        let a: Vec<&str> = a.split('\t').collect();
        let b: Vec<&str> = b.split('\t').collect();
        assert_eq!(a[0], b[0]);
        for (x, y) in a[1..].iter().zip(&b[1..]) {
            let (x, y): (f64, f64) = (x.parse().unwrap(), y.parse().unwrap());
            assert!((x - y).abs() <= 1e-6);
        }
    }
}

#[test]
fn infer_rejects_empty_document() {
    let f = Fixture::new(0);
    ok(&["train", f.cfg()]);
    let input = f.dir.join("new.jsonl");
    std::fs::write(&input, "{\"id\":\"q\",\"text\":\"the of and\"}\n").unwrap();
    let out = run(&["infer", f.cfg(), "--input", input.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("'q'"));
}

#[test]
fn intrusion_items_and_scoring() {
    let f = Fixture::new(0);
    ok(&["train", f.cfg()]);
    ok(&["intrusion", f.cfg()]);
    let items = std::fs::read_to_string(f.out("intrusion_items.jsonl")).unwrap();
    assert!(!items.contains("answer"));
    let keys = std::fs::read_to_string(f.out("intrusion_keys.jsonl")).unwrap();
    let responses: String = keys
        .lines()
        .enumerate()
        .map(|(i, l)| {
            let k: Value = serde_json::from_str(l).unwrap();
            let idx = k["answer_index"].as_u64().unwrap();
            let pick = if i % 2 == 0 { idx } else { (idx + 1) % 6 };
            format!("{}\n", serde_json::json!({"item_id": k["item_id"], "selected_index": pick}))
        })
        .collect();
    let rp = f.dir.join("responses.jsonl");
    std::fs::write(&rp, responses).unwrap();
    let s = ok(&["intrusion", f.cfg(), "--score", rp.to_str().unwrap()]);
    assert!(s.contains("0.5000"), "{s}");

    std::fs::write(&rp, "{\"item_id\":\"nope\",\"selected_index\":0}\n").unwrap();
    assert_eq!(code(&run(&["intrusion", f.cfg(), "--score", rp.to_str().unwrap()])), 2);
}

#[test]
fn sweep_writes_one_row_per_pair() {
    let f = Fixture::new(0);
    ok(&["sweep", f.cfg(), "--l1", "0,15", "--l2", "0,10", "--epochs", "2"]);
    let mut r = csv::Reader::from_path(f.out("sweep.csv")).unwrap();
    let headers: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        headers,
        ["lambda1", "lambda2", "coherence", "diversity", "quality", "f1_micro", "f1_macro"]
    );
    assert_eq!(r.records().count(), 4);
}

#[test]
fn held_lock_blocks_a_second_run() {
    let f = Fixture::new(0);
    std::fs::write(f.out(".lock"), "1").unwrap();
    let out = run(&["train", f.cfg()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("locked"));
}

#[test]
fn diverging_training_exits_with_diagnostic() {
    let f = Fixture::new(0);
    let cfg = std::fs::read_to_string(f.cfg()).unwrap().replace(
        "hidden_size = 32",
        "hidden_size = 32\nlearning_rate = 1e300",
    );
    std::fs::write(f.cfg(), cfg).unwrap();
    let out = run(&["train", f.cfg()]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    let diag: Value = serde_json::from_slice(&read(&f.out("nonfinite_diagnostic.json"))).unwrap();
    assert!(diag.is_object());
}
