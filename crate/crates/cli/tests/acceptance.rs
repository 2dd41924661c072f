//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails or overruns its time limit.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use pidp_core::cluster::{
    cluswisard_auto, cluswisard_fit, dbscan_fit, hierarchical_fit, kmeans_fit,
    write_clusters_distribution, write_samples_distribution, ClusterPartition, Engine,
    Hyperparameters, Setting, NOISE,
};
use pidp_core::encoding::{
    dl_distance, encode_working_set, match_option, to_binary, EncodingConfig, EncodingPlan,
    FieldSpec, FieldText, NumericStats, OptionMatch,
};
use pidp_core::filter::{apply_filter, parse_filter};
use pidp_core::ingest::{parse_disclosure_csv, write_disclosures, WorkingSet, DISCLOSURE_HEADER};
use pidp_core::issues::IssueLog;
use pidp_core::maturity::{derive_erml, ProcessPIVector};
use pidp_core::model::{load_model, FieldKind, ModelDefinition, QuestionTypeKind};
use pidp_core::validation::{mean_prevalence_index, prevalence_matrix, MpiMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn data_dir() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data"))
}

fn model() -> Arc<ModelDefinition> {
    Arc::new(load_model(data_dir().join("model/cities2019.toml")).unwrap())
}

fn fixture() -> WorkingSet {
    parse_disclosure_csv(data_dir().join("fixture/disclosures.csv"), model())
        .unwrap()
        .0
}

// 1 ---------------------------------------------------------------------

/// Printed Brazil rows: id, dm, da, dp, dan, rb, rp, dep, mon, ERM-L.
const BRAZIL: [(u64, u8, [u8; 3], u8, u8, u8, u8, u8, u8, u8); 11] = [
    (31156, 1, [1, 1, 0], 0, 1, 0, 0, 1, 1, 1),
    (31176, 1, [1, 1, 1], 1, 4, 1, 0, 1, 1, 3),
    (31184, 1, [1, 0, 1], 1, 1, 1, 0, 1, 1, 2),
    (35848, 1, [1, 0, 0], 0, 2, 1, 0, 1, 1, 1),
    (35865, 1, [1, 0, 0], 0, 1, 1, 0, 1, 1, 1),
    (35872, 0, [1, 0, 0], 0, 2, 0, 0, 1, 1, 0),
    (35880, 1, [1, 0, 0], 1, 1, 0, 0, 1, 0, 2),
    (35897, 1, [1, 0, 0], 1, 2, 0, 0, 1, 1, 3),
    (36041, 1, [0, 0, 0], 1, 1, 0, 0, 1, 0, 0),
    (42120, 1, [1, 1, 0], 0, 1, 1, 0, 1, 1, 1),
    (42123, 1, [1, 0, 0], 1, 1, 1, 0, 1, 0, 2),
];

fn erml_calibration() -> Check {
    for r in &BRAZIL {
        let pi = ProcessPIVector {
            sample_id: r.0,
            dm: r.1,
            da: r.2,
            dp: r.3,
            dan: r.4,
            rb: r.5,
            rp: r.6,
            dep: r.7,
            mon: r.8,
        };
        let got = derive_erml(&pi).level();
        ensure!(got == r.9, "sample {}: level {got}, printed {}", r.0, r.9);
    }
    Ok("11/11 rows".into())
}

// 2 ---------------------------------------------------------------------

/// Recount b, c and v for every label pair by scanning the samples.
fn prevalence_oracle(c: &[usize], v: &[usize], rows: &[usize], cols: &[usize]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|&i| {
            cols.iter()
                .map(|&j| {
                    let (mut b, mut ci, mut vj) = (0usize, 0usize, 0usize);
                    for s in 0..c.len() {
                        ci += usize::from(c[s] == i);
                        vj += usize::from(v[s] == j);
                        b += usize::from(c[s] == i && v[s] == j);
                    }
                    (2 * b) as f64 / (ci + vj) as f64
                })
                .collect()
        })
        .collect()
}

fn partition(engine: Engine, labels: &[usize]) -> ClusterPartition {
    ClusterPartition::from_labels(engine, (1..=labels.len() as u64).collect(), labels)
}

fn prevalence_math() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..100 {
        let n = rng.gen_range(1..=50);
        let (kc, kv) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
        let c: Vec<usize> = (0..n).map(|_| rng.gen_range(0..kc)).collect();
        let v: Vec<usize> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.1) {
                    NOISE
                } else {
                    rng.gen_range(0..kv)
                }
            })
            .collect();
        let (cp, vp) = (
            partition(Engine::Cluswisard, &c),
            partition(Engine::Dbscan, &v),
        );
        let pm = prevalence_matrix(&cp, &vp).map_err(|e| e.to_string())?;
        let want = prevalence_oracle(&cp.labels, &vp.labels, &pm.row_labels, &pm.col_labels);
        ensure!(pm.p == want, "case {case}: matrix differs from the oracle");
    }

    // a b c | d e f against the same grouping
    let same = prevalence_matrix(
        &partition(Engine::Cluswisard, &[0, 0, 0, 1, 1, 1]),
        &partition(Engine::Kmeans, &[0, 0, 0, 1, 1, 1]),
    )
    .map_err(|e| e.to_string())?;
    ensure!(
        same.p[0][0] == 1.0,
        "identical cluster gave {}",
        same.p[0][0]
    );
    let mpi = mean_prevalence_index(&same, MpiMode::Mean);
    ensure!(mpi == 0.5, "identical equal-size 2-cluster mpi {mpi}");
    // C {a,b} against V {b,c}; C {a,b} against V {c,d}
    let v = partition(Engine::Kmeans, &[1, 0, 0, 1]);
    let pm = prevalence_matrix(&partition(Engine::Cluswisard, &[0, 0, 1, 1]), &v)
        .map_err(|e| e.to_string())?;
    let bc = pm
        .col_labels
        .iter()
        .position(|&l| l == v.labels[1])
        .unwrap();
    ensure!(pm.p[0][bc] == 0.5, "overlap cell {}", pm.p[0][bc]);
    let pm = prevalence_matrix(
        &partition(Engine::Cluswisard, &[0, 0, 1, 1]),
        &partition(Engine::Kmeans, &[1, 1, 0, 0]),
    )
    .map_err(|e| e.to_string())?;
    let cd = pm.col_labels.iter().position(|&l| l == 1).unwrap();
    ensure!(pm.p[0][cd] == 0.0, "disjoint cell {}", pm.p[0][cd]);
    Ok("100 random pairs exact, hand cases 1.0/0.5/0.0, mpi 0.5".into())
}

// 3 ---------------------------------------------------------------------

fn number_plan(slot: usize, min: f64, max: f64) -> EncodingPlan {
    EncodingPlan {
        slot_size: slot,
        base_year: 2019,
        field_order: vec![FieldSpec {
            question_number: "x".into(),
            column_number: 0,
            kind: FieldKind::Number,
            option_count: 0,
        }],
        numeric_stats: vec![Some(NumericStats {
            min,
            max,
            mean: (min + max) / 2.0,
            nonempty: 2,
        })],
    }
}

fn answered(v: impl ToString) -> FieldText {
    FieldText {
        rows: vec![v.to_string()],
        answered: vec![true],
    }
}

fn unanswered() -> FieldText {
    FieldText {
        rows: vec!["0".into()],
        answered: vec![false],
    }
}

fn encoding_properties() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for t in 0..1000 {
        let lo: f64 = rng.gen_range(-100.0..100.0);
        let hi = lo + rng.gen_range(0.0..200.0);
        let mut a = rng.gen_range(lo..=hi);
        let mut b = rng.gen_range(lo..=hi);
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        let plan = number_plan(rng.gen_range(1..=16), lo, hi);
        let ba = to_binary(&[answered(a)], &plan);
        let bb = to_binary(&[answered(b)], &plan);
        ensure!(
            ba.iter().zip(&bb).all(|(x, y)| !*x || *y),
            "triple {t}: bits({a}) not within bits({b})"
        );
    }

    let ws = fixture();
    let enc = encode_working_set(
        &ws,
        &EncodingConfig {
            base_year: 2019,
            max_dist: 3,
        },
        &mut IssueLog::new(),
    );
    let plan = &enc.plan;
    let mut multi = 0;
    for (i, f) in plan.field_order.iter().enumerate() {
        if f.kind != FieldKind::MultiSelect {
            continue;
        }
        multi += 1;
        let single = |code: usize| {
            let mut t = vec![unanswered(); plan.field_order.len()];
            t[i] = answered(code);
            to_binary(&t, plan)
        };
        for a in 1..=f.option_count {
            for b in a + 1..=f.option_count {
                let (x, y) = (single(a), single(b));
                ensure!(
                    x.iter().zip(&y).all(|(p, q)| !(*p && *q)),
                    "{} options {a}/{b} overlap",
                    f.label()
                );
            }
        }
    }
    ensure!(multi > 0, "fixture has no MULTI_SELECT field");
    let width = plan.field_order.len() * plan.slot_size;
    for s in &enc.samples {
        ensure!(
            s.bits.len() == width,
            "sample {} has {} bits, want {width}",
            s.sample_id,
            s.bits.len()
        );
    }
    Ok(format!(
        "1000 triples, {multi} multi-select fields, {} samples x {width} bits",
        enc.samples.len()
    ))
}

// 4 ---------------------------------------------------------------------

/// Full-table optimal-string-alignment distance.
fn osa_table(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = (d[i - 1][j] + 1)
                .min(d[i][j - 1] + 1)
                .min(d[i - 1][j - 1] + cost);
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                d[i][j] = d[i][j].min(d[i - 2][j - 2] + 1);
            }
        }
    }
    d[a.len()][b.len()]
}

fn dl_correction() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let alphabet = ['a', 'b', 'c', 'd', 'é'];
    let word = |rng: &mut ChaCha8Rng| -> String {
        let n = rng.gen_range(0..=10);
        (0..n)
            .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
            .collect()
    };
    for _ in 0..1000 {
        let (a, b) = (word(&mut rng), word(&mut rng));
        let (got, want) = (dl_distance(&a, &b), osa_table(&a, &b));
        ensure!(got == want, "dl({a:?}, {b:?}) = {got}, oracle {want}");
    }

    let m = model();
    let rows = [
        (
            "1.1a",
            0,
            "Individual city commitment",
            "Individual city Commitment",
        ),
        (
            "1.13",
            0,
            "Visualization/Analysis Software - Tableau ; Qlik etc",
            "Visualization/Analysis Software - Tableau , Qlik, etc",
        ),
        (
            "5.0a",
            1,
            "Larger – covers the whole city and adjoining areas",
            "Larger - covers the whole city and adjoining areas",
        ),
    ];
    for (qn, col, raw, canonical) in rows {
        let leaf = m
            .question(qn)
            .and_then(|q| q.leaf(col))
            .ok_or(format!("{qn} missing"))?;
        let want = leaf
            .option_code(canonical)
            .ok_or(format!("{qn}: no option {canonical:?}"))?;
        match match_option(raw, leaf, 3) {
            OptionMatch::Corrected { code, .. } if code == want => {}
            other => return Err(format!("{qn}: {raw:?} resolved to {other:?}")),
        }
    }
    Ok("1000 pairs exact, 3/3 table rows corrected".into())
}

// 5 ---------------------------------------------------------------------

fn groups(p: &ClusterPartition) -> BTreeSet<Vec<usize>> {
    (0..p.cluster_count)
        .map(|c| (0..p.len()).filter(|&i| p.labels[i] == c).collect())
        .collect()
}

fn blobs(rng: &mut ChaCha8Rng, per: usize) -> Vec<Vec<f64>> {
    (0..2 * per)
        .map(|i| {
            let centre = if i % 2 == 0 { 0.0 } else { 10.0 };
            vec![
                centre + rng.gen_range(-0.5..0.5),
                centre + rng.gen_range(-0.5..0.5),
            ]
        })
        .collect()
}

fn complement_groups(rng: &mut ChaCha8Rng, per: usize, len: usize) -> Vec<Vec<bool>> {
    let base: Vec<bool> = (0..len).map(|_| rng.gen_bool(0.5)).collect();
    (0..2 * per)
        .map(|i| {
            let mut p: Vec<bool> = base.iter().map(|&b| b ^ (i % 2 == 1)).collect();
            let k = rng.gen_range(0..len);
            p[k] = !p[k];
            p
        })
        .collect()
}

fn partition_bytes(p: &ClusterPartition) -> Vec<u8> {
    let mut buf = Vec::new();
    write_clusters_distribution(&mut buf, p).unwrap();
    buf
}

fn clustering_sanity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let truth: BTreeSet<Vec<usize>> = [(0..12).step_by(2).collect(), (1..12).step_by(2).collect()]
        .into_iter()
        .collect();
    let ids: Vec<u64> = (1..=12).collect();
    for trial in 0..10 {
        let v = blobs(&mut rng, 6);
        let h = hierarchical_fit(&ids, &v, 2).map_err(|e| e.to_string())?;
        let k = kmeans_fit(&ids, &v, 2, trial).map_err(|e| e.to_string())?;
        let d = dbscan_fit(&ids, &v, 2.0, 3).map_err(|e| e.to_string())?;
        ensure!(
            groups(&h) == truth,
            "trial {trial}: hierarchical missed the blobs"
        );
        ensure!(
            groups(&k.partition) == truth,
            "trial {trial}: k-means missed the blobs"
        );
        ensure!(
            groups(&d) == truth && d.noise_count() == 0,
            "trial {trial}: DBSCAN missed the blobs"
        );
        let pics = complement_groups(&mut rng, 6, 96);
        let (hp, _) =
            cluswisard_auto(&ids, &pics, &Hyperparameters::default()).map_err(|e| e.to_string())?;
        let w = cluswisard_fit(&ids, &pics, &hp).map_err(|e| e.to_string())?;
        ensure!(
            groups(&w.partition) == truth,
            "trial {trial}: ClusWiSARD missed the groups ({hp:?})"
        );
    }

    let mut runs = 0;
    for r in 0..200u64 {
        let n = rng.gen_range(1..40);
        let len = rng.gen_range(8..128);
        let pics: Vec<Vec<bool>> = (0..n)
            .map(|_| (0..len).map(|_| rng.gen_bool(0.5)).collect())
            .collect();
        let limit = rng.gen_range(1..10);
        let hp = Hyperparameters {
            threshold: Setting::Value(rng.gen_range(0.05..1.0)),
            discriminator_limit: Setting::Value(limit),
            tuple_size: rng.gen_range(1..12),
            seed: r,
            ..Default::default()
        };
        let ids: Vec<u64> = (1..=n as u64).collect();
        let fit = cluswisard_fit(&ids, &pics, &hp).map_err(|e| e.to_string())?;
        ensure!(
            fit.partition.cluster_count <= limit,
            "run {r}: {} clusters over limit {limit}",
            fit.partition.cluster_count
        );
        runs += 1;

        let dim = rng.gen_range(1..5);
        let v: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-5.0..5.0)).collect())
            .collect();
        let kk = rng.gen_range(1..=n.min(6));
        let km = kmeans_fit(&ids, &v, kk, r).map_err(|e| e.to_string())?;
        ensure!(
            km.inertia_history.windows(2).all(|w| w[1] <= w[0] + 1e-9),
            "run {r}: inertia rose {:?}",
            km.inertia_history
        );

        if r % 20 == 0 {
            let again = cluswisard_fit(&ids, &pics, &hp).map_err(|e| e.to_string())?;
            let mut a = partition_bytes(&fit.partition);
            let mut b = partition_bytes(&again.partition);
            write_samples_distribution(&mut a, &fit.distribution).unwrap();
            write_samples_distribution(&mut b, &again.distribution).unwrap();
            ensure!(a == b, "run {r}: ClusWiSARD rerun differs");
            let km2 = kmeans_fit(&ids, &v, kk, r).map_err(|e| e.to_string())?;
            ensure!(
                partition_bytes(&km.partition) == partition_bytes(&km2.partition),
                "run {r}: k-means rerun differs"
            );
        }
    }
    Ok(format!(
        "10 blob trials x 4 engines, {runs} limit/inertia runs"
    ))
}

// 6 ---------------------------------------------------------------------

fn cell(r: &pidp_core::ingest::AnswerRecord, col: usize) -> String {
    let mut buf = Vec::new();
    write_disclosures(&mut buf, std::iter::once(r)).unwrap();
    let mut rd = csv::Reader::from_reader(buf.as_slice());
    rd.records().next().unwrap().unwrap()[col].to_string()
}

fn filter_language() -> Check {
    let ws = fixture();
    let base = data_dir().join("fixture");
    let run = |expr: &str| -> Result<WorkingSet, String> {
        let e = parse_filter(expr).map_err(|e| format!("{expr}: {e}"))?;
        apply_filter(&e, &ws, &base).map_err(|e| format!("{expr}: {e}"))
    };
    let qn_in = |qn: &str, p: &[&str]| p.iter().any(|s| qn.starts_with(s));
    let count = |f: &dyn Fn(&pidp_core::ingest::AnswerRecord) -> bool| {
        ws.records.iter().filter(|r| f(r)).count()
    };

    let out = run("I:Question&nbsp;Number=0*")?;
    ensure!(
        out.records.len() == count(&|r| qn_in(&r.question_number, &["0"])),
        "0* kept {}",
        out.records.len()
    );
    let out = run("I:Question&nbsp;Number=0*,1*,4*,5*,7*")?;
    let secs = ["0", "1", "4", "5", "7"];
    ensure!(
        out.records.len() == count(&|r| qn_in(&r.question_number, &secs)),
        "sections kept {}",
        out.records.len()
    );
    let out = run("E:#FieldType=YN;I:Question&nbsp;Number=0*,1*")?;
    let yn = |qn: &str| {
        ws.model
            .question(qn)
            .is_some_and(|q| q.kind == QuestionTypeKind::Yn)
    };
    let want = count(&|r| qn_in(&r.question_number, &["0", "1"]) && !yn(&r.question_number));
    ensure!(
        out.records.len() == want && want > 0,
        "YN exclusion kept {} of {want}",
        out.records.len()
    );
    let out = run("\"I:#SampleId=@samples.txt")?;
    let ids: BTreeSet<u64> = out.records.iter().map(|r| r.sample_id).collect();
    ensure!(ids == BTreeSet::from([31176]), "sample file kept {ids:?}");

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut draws = 0;
    while draws < 50 {
        let col = rng.gen_range(0..DISCLOSURE_HEADER.len());
        let value = cell(&ws.records[rng.gen_range(0..ws.records.len())], col);
        let cut = rng.gen_range(0..6);
        let pattern = if cut > 0 && value.chars().count() > cut {
            format!("{}*", value.chars().take(cut).collect::<String>())
        } else {
            value
        };
        if pattern.is_empty()
            || pattern.trim() != pattern
            || pattern.contains([',', ';', '='])
            || pattern.starts_with('@')
        {
            continue;
        }
        let key = DISCLOSURE_HEADER[col];
        let inc = run(&format!("I:{key}={pattern}"))?;
        let exc = run(&format!("E:{key}={pattern}"))?;
        let a: BTreeSet<_> = inc.records.iter().map(|r| r.key()).collect();
        let b: BTreeSet<_> = exc.records.iter().map(|r| r.key()).collect();
        ensure!(
            a.is_disjoint(&b) && a.len() + b.len() == ws.records.len(),
            "{key}={pattern}: {} + {} of {}",
            a.len(),
            b.len(),
            ws.records.len()
        );
        draws += 1;
    }
    Ok("4/4 table expressions, 50 partition draws".into())
}

// 7 ---------------------------------------------------------------------

fn pidp(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_pidp"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("pidp runs")
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(dir).unwrap().to_string_lossy().into_owned(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

const DOCUMENTED: [&str; 11] = [
    "preprocess/iter-01/textual.csv",
    "preprocess/iter-01/binary.bin",
    "preprocess/iter-01/consolidation.csv",
    "preprocess/iter-01/questions.txt",
    "cluster/iter-01/clusters_cluswisard.csv",
    "cluster/iter-01/samples_cluswisard.csv",
    "cluster/iter-01/hyperparameters.txt",
    "validate/iter-01/prevalence_hierarchical.csv",
    "maturity/erml.csv",
    "maturity/regional.csv",
    "manifest.json",
];

fn end_to_end() -> Check {
    let config = data_dir().join("fixture/run.toml");
    let config = config.to_str().unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let mut trees = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let o = pidp(&[
            "run-all",
            "--config",
            config,
            "--out",
            out.to_str().unwrap(),
        ]);
        ensure!(
            o.status.code() == Some(0),
            "run-all exited {:?}: {}",
            o.status.code(),
            String::from_utf8_lossy(&o.stderr)
        );
        let run = out.join("WW_0a1a4a5a_AllFT");
        for f in DOCUMENTED {
            ensure!(run.join(f).is_file(), "missing {f}");
        }
        let v = pidp(&["verify-manifest", run.to_str().unwrap()]);
        ensure!(
            v.status.success(),
            "verify-manifest failed: {}",
            String::from_utf8_lossy(&v.stderr)
        );
        trees.push(tree(&run));
    }
    ensure!(trees[0] == trees[1], "reruns differ");

    // an empty disclosure file is a data error
    let text = std::fs::read_to_string(data_dir().join("fixture/run.toml")).unwrap();
    let header = std::fs::read_to_string(data_dir().join("fixture/disclosures.csv")).unwrap();
    let dir = tmp.path().join("empty");
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(
        dir.join("disclosures.csv"),
        format!("{}\n", header.lines().next().unwrap()),
    )
    .unwrap();
    let fixture = data_dir().join("fixture");
    let cfg = text
        .lines()
        .map(|l| match l.split_once(" = \"") {
            Some((k, v))
                if ["externals", "cem", "model", "dictionary", "pi_mapping"].contains(&k) =>
            {
                format!(
                    "{k} = \"{}\"",
                    fixture.join(v.trim_end_matches('"')).display()
                )
            }
            _ => l.to_string(),
        })
        .collect::<Vec<_>>()
        .join("\n");
    std::fs::write(dir.join("run.toml"), cfg).unwrap();
    let o = pidp(&[
        "run-all",
        "--config",
        dir.join("run.toml").to_str().unwrap(),
        "--out",
        dir.join("out").to_str().unwrap(),
    ]);
    ensure!(
        o.status.code() == Some(3),
        "empty input exited {:?}",
        o.status.code()
    );

    Ok(format!(
        "{} files, rerun identical, empty input exits 3",
        trees[0].len()
    ))
}

// 8 ---------------------------------------------------------------------

fn monotonicity() -> Check {
    let mut all = Vec::new();
    for bits in 0u32..(1 << 9) {
        let b = |k: u32| ((bits >> k) & 1) as u8;
        for dan in 0..=5 {
            all.push(ProcessPIVector {
                sample_id: 0,
                dm: b(0),
                da: [b(1), b(2), b(3)],
                dp: b(4),
                dan,
                rb: b(5),
                rp: b(6),
                dep: b(7),
                mon: b(8),
            });
        }
    }
    let mut edges = 0;
    for p in &all {
        let mut ups: Vec<ProcessPIVector> = Vec::new();
        for k in 0..10 {
            let mut q = *p;
            let slot = match k {
                0 => &mut q.dm,
                1..=3 => &mut q.da[k - 1],
                4 => &mut q.dp,
                5 => &mut q.dan,
                6 => &mut q.rb,
                7 => &mut q.rp,
                8 => &mut q.dep,
                _ => &mut q.mon,
            };
            *slot += 1;
            if q.is_valid() {
                ups.push(q);
            }
        }
        for q in ups {
            edges += 1;
            ensure!(
                derive_erml(&q) >= derive_erml(p),
                "{p:?} -> {q:?} lowers the level"
            );
        }
    }
    Ok(format!(
        "{} vectors, {edges} edges, 0 violations",
        all.len()
    ))
}

fn main() {
    let criteria: [(u8, &str, u64, fn() -> Check); 8] = [
        (1, "ERM-L calibration", 1, erml_calibration),
        (2, "prevalence math", 5, prevalence_math),
        (3, "encoding properties", 5, encoding_properties),
        (4, "DL correction", 5, dl_correction),
        (5, "clustering sanity", 10, clustering_sanity),
        (6, "filter language", 5, filter_language),
        (7, "end-to-end", 30, end_to_end),
        (8, "ERM-L monotonicity", 5, monotonicity),
    ];
    let mut failed = 0;
    for (id, name, limit, check) in criteria {
        let start = Instant::now();
        let result =
            catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let result = result.and_then(|detail| {
            if elapsed > Duration::from_secs(limit) {
                Err(format!(
                    "took {:.2}s, limit {limit}s",
                    elapsed.as_secs_f64()
                ))
            } else {
                Ok(detail)
            }
        });
        let (status, detail) = match &result {
            Ok(d) => ("PASS", d.as_str()),
            Err(e) => ("FAIL", e.as_str()),
        };
        failed += usize::from(result.is_err());
        println!(
            "criterion {id} {status} {name} [{:.2}s / {limit}s] {detail}",
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
    println!("all 8 criteria passed");
}
