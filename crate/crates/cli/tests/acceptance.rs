//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use infosearch_core::bm25::{run_all_modes, tokenize, Bm25Params, InvertedIndex};
use infosearch_core::harness::{evaluate_system, EvalRecord, Scope, SystemEvaluation};
use infosearch_core::ingest::{load_dataset, write_dataset, write_system};
use infosearch_core::metrics::{p_mrr_doc, robustness_at_k, wise_branch, wise_query, MetricConfig, PMrrSign, ResolvedContext, WiseBranch};
use infosearch_core::model::{Dataset, Dimension, Mode, RankedList, RunSet};
use infosearch_core::oracle::{compare_evaluations, oracle_metrics, wise_of};
use infosearch_core::report::per_gap;
use infosearch_core::synth::{gen_synthetic_dataset, gen_synthetic_runs, random_spec, Behavior, SynthSpec};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Environment variable naming a directory with the official dataset in the
/// JSONL layout read by `infosearch validate`.
const OFFICIAL_DATASET_ENV: &str = "INFOSEARCH_OFFICIAL_DATASET";

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;

type NamedCheck = Box<dyn Fn() -> Outcome>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(detail: String, elapsed: Duration, budget: Duration) -> Check {
    ensure(elapsed < budget, || format!("{detail}; took {elapsed:.2?}, budget {budget:?}"))?;
    Ok(detail)
}

fn ctx(r_ori: usize, r_ins: usize, r_rev: usize, n: usize) -> ResolvedContext {
    ResolvedContext { r_ori, r_ins, r_rev, s_ori: 0.0, s_ins: 0.0, s_rev: 0.0, n_positives: n }
}

fn c1_counter_examples() -> Check {
    let start = Instant::now();
    let a = p_mrr_doc(10, 5, PMrrSign::AsPrinted);
    let b = p_mrr_doc(100, 50, PMrrSign::AsPrinted);
    let g1 = robustness_at_k(&[[0.8, 0.5, 0.3, 0.2]]).map_err(|e| e.to_string())?;
    let g2 = robustness_at_k(&[[0.9, 0.9, 0.9, 0.2]]).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(a == -0.5 && b == -0.5, || format!("p_mrr_doc(10,5)={a}, p_mrr_doc(100,50)={b}"))?;
    ensure(g1 == 0.2 && g2 == 0.2, || format!("robustness {g1}, {g2}"))?;
    within_budget(format!("p-MRR {a}, {b}; robustness {g1}, {g2}"), elapsed, Duration::from_millis(1))
}

fn c2_wise_boundaries() -> Check {
    let cfg = MetricConfig::default();
    let w = |r_ori, r_ins, r_rev, n| wise_query(&ctx(r_ori, r_ins, r_rev, n), &cfg).map_err(|e| e.to_string());
    let inverted = w(5, 9, 2, 3)?;
    let top = w(3, 1, 7, 3)?;
    let far = w(25, 3, 30, 3)?;
    ensure(inverted == -1.0, || format!("inverted triple gave {inverted}"))?;
    ensure(top == 1.0, || format!("instructed rank 1 within N gave {top}"))?;
    ensure(far == 0.01, || format!("original rank beyond K gave {far}"))?;
    Ok(format!("{inverted}, {top}, {far}"))
}

fn c3_per_reconstruction() -> Check {
    let per = per_gap(-3.0, 65.9).map_err(|e| e.to_string())?;
    ensure((per - 104.6).abs() <= 0.05, || format!("per_gap(-3.0, 65.9) = {per}"))?;
    Ok(format!("per_gap(-3.0, 65.9) = {per:.4}"))
}

fn c4_differential() -> Check {
    let start = Instant::now();
    let mut max_queries = 0;
    for seed in 0..1000u64 {
        let spec = random_spec(seed);
        let ds = gen_synthetic_dataset(&spec).map_err(|e| e.to_string())?;
        max_queries = max_queries.max(ds.instructed_queries.len());
        let behavior = Behavior::ALL[(seed % Behavior::ALL.len() as u64) as usize];
        let run = gen_synthetic_runs(&ds, &spec, behavior).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = MetricConfig {
            k_ndcg: rng.gen_range(1..=12),
            k_wise: rng.gen_range(1..=25),
            p_mrr_sign: if rng.gen_bool(0.5) { PMrrSign::AsPrinted } else { PMrrSign::Flipped },
            ..MetricConfig::default()
        };
        let h = evaluate_system(&ds, &run, &cfg).map_err(|e| format!("seed {seed}: {e}"))?;
        let o = oracle_metrics(&ds, &run, &cfg).map_err(|e| format!("seed {seed}: {e}"))?;
        let diff = compare_evaluations(&h, &o, 1e-12);
        ensure(diff.is_empty(), || format!("seed {seed}: {} mismatches, first {}", diff.len(), diff[0]))?;
    }
    ensure(max_queries <= 50, || format!("instance with {max_queries} queries"))?;
    within_budget(format!("1000 pairs, max {max_queries} queries, tol 1e-12"), start.elapsed(), Duration::from_secs(60))
}

fn c5_case_totality() -> Check {
    let start = Instant::now();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for k in [1, 5, 12, 20] {
        for n in 1..=4 {
            let cfg = MetricConfig { k_wise: k, ..MetricConfig::default() };
            for r_ins in 1..=12 {
                for r_ori in 1..=12 {
                    for r_rev in 1..=12 {
                        // cases in the order the formula lists them; the first true one fires
                        let cases = [
                            (r_ins <= r_ori && r_ori < r_rev, WiseBranch::Reward),
                            (r_rev < r_ori && r_ori < r_ins, WiseBranch::PenaltyInverted),
                            (r_ori <= r_ins, WiseBranch::PenaltyInstructedDrop),
                            (r_rev <= r_ori, WiseBranch::PenaltyReversedRise),
                        ];
                        let expected = cases.iter().find(|(c, _)| *c).map(|(_, b)| *b);
                        let expected = expected.ok_or_else(|| format!("({r_ins},{r_ori},{r_rev}): no case applies"))?;
                        let branch = wise_branch(r_ori, r_ins, r_rev).ok_or_else(|| format!("({r_ins},{r_ori},{r_rev}): no branch"))?;
                        ensure(branch == expected, || format!("({r_ins},{r_ori},{r_rev}): {branch:?} vs {expected:?}"))?;
                        let v = wise_query(&ctx(r_ori, r_ins, r_rev, n), &cfg).map_err(|e| e.to_string())?;
                        ensure((-1.0..=1.0).contains(&v), || format!("({r_ins},{r_ori},{r_rev}) = {v}"))?;
                        ensure(v == wise_of(r_ori, r_ins, r_rev, n, k), || format!("({r_ins},{r_ori},{r_rev}) disagrees with oracle"))?;
                        *counts.entry(format!("{branch:?}")).or_default() += 1;
                    }
                }
            }
        }
    }
    let detail = counts.iter().map(|(b, c)| format!("{b}={c}")).collect::<Vec<_>>().join(" ");
    within_budget(format!("1728 triples x 16 (K, N) settings; {detail}"), start.elapsed(), Duration::from_secs(1))
}

fn c6_behavior_ordering() -> Check {
    let start = Instant::now();
    let spec = SynthSpec { seed: 2024, dims: Dimension::ALL.to_vec(), cores_per_dim: 20, conditions_per_core: 3, corpus_noise_docs: 8, run_depth: 10 };
    let ds = gen_synthetic_dataset(&spec).map_err(|e| e.to_string())?;
    let cfg = MetricConfig::default();
    let eval = |b| -> Result<SystemEvaluation, String> {
        let run = gen_synthetic_runs(&ds, &spec, b).map_err(|e| e.to_string())?;
        evaluate_system(&ds, &run, &cfg).map_err(|e| e.to_string())
    };
    let perfect = eval(Behavior::Perfect)?;
    let anti = eval(Behavior::AntiInstruction)?;
    let random = eval(Behavior::Random)?;
    ensure(ds.instructed_queries.len() == 360, || format!("{} queries", ds.instructed_queries.len()))?;
    ensure(perfect.overall.sicr == 1.0, || format!("perfect SICR {}", perfect.overall.sicr))?;
    ensure(perfect.records.iter().all(|r| r.wise_f == r.wise_ideal), || "perfect WISE below ideal on some query".into())?;
    ensure(perfect.overall.wise_act == perfect.overall.wise_ideal, || "perfect overall WISE below ideal".into())?;
    ensure(anti.overall.wise_act < 0.0, || format!("anti WISE {}", anti.overall.wise_act))?;
    ensure(anti.overall.sicr == 0.0, || format!("anti SICR {}", anti.overall.sicr))?;
    let (a, r, p) = (anti.overall.wise_act, random.overall.wise_act, perfect.overall.wise_act);
    ensure(a < r && r < p, || format!("WISE anti {a}, random {r}, perfect {p}"))?;
    within_budget(format!("WISE anti {a:.4} < random {r:.4} < perfect {p:.4}"), start.elapsed(), Duration::from_secs(5))
}

/// Scores every document by summing per-term weights computed from raw counts.
fn brute_force_ranking(docs: &[(String, String)], p: &Bm25Params, query: &str) -> Vec<String> {
    let tokenized: Vec<Vec<String>> = docs.iter().map(|(_, t)| tokenize(t)).collect();
    let n = docs.len() as f64;
    let avg = tokenized.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut scored: Vec<(String, f64)> = docs
        .iter()
        .zip(&tokenized)
        .map(|((id, _), toks)| {
            let mut s = 0.0;
            for term in tokenize(query) {
                let tf = toks.iter().filter(|t| **t == term).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = tokenized.iter().filter(|d| d.contains(&term)).count() as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                let len = toks.len() as f64;
                s += idf * tf * (p.k1 + 1.0) / (tf + p.k1 * (1.0 - p.b + p.b * len / avg));
            }
            (id.clone(), s)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.into_iter().map(|(d, _)| d).collect()
}

fn c7_bm25_brute_force() -> Check {
    let start = Instant::now();
    let words = ["alpha", "beta", "gamma", "delta", "x1", "糖", "尿病", "Ünïcode", "ab"];
    let mut compared = 0;
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0xB25 ^ seed);
        let docs: Vec<(String, String)> = (0..rng.gen_range(1..=64))
            .map(|i| {
                let text: Vec<&str> = (0..rng.gen_range(0..15)).map(|_| *words.choose(&mut rng).unwrap()).collect();
                (format!("d{i:02}"), text.join(if rng.gen_bool(0.5) { " " } else { ", " }))
            })
            .collect();
        let p = Bm25Params { k1: rng.gen_range(0.0..3.0), b: rng.gen_range(0.0..=1.0) };
        let index = InvertedIndex::build(docs.iter().map(|(id, t)| (id.clone(), t.as_str()))).map_err(|e| e.to_string())?;
        for _ in 0..5 {
            let query: Vec<&str> = (0..rng.gen_range(1..6)).map(|_| *words.choose(&mut rng).unwrap()).collect();
            let query = query.join(" ");
            let top_k = rng.gen_range(1..=80);
            let got = index.search(&p, "q", Mode::Original, &query, top_k).map_err(|e| e.to_string())?;
            let got: Vec<&str> = got.doc_ids().collect();
            let want = brute_force_ranking(&docs, &p, &query);
            let want: Vec<&str> = want.iter().take(top_k).map(String::as_str).collect();
            ensure(got == want, || format!("seed {seed}, query {query:?}: {got:?} vs {want:?}"))?;
            compared += 1;
        }
    }
    within_budget(format!("200 corpora, {compared} queries, exact rank agreement"), start.elapsed(), Duration::from_secs(10))
}

fn same_ignoring_scores(a: &SystemEvaluation, b: &SystemEvaluation) -> bool {
    let strip = |r: &EvalRecord| EvalRecord { s_ori: None, s_ins: None, s_rev: None, ..r.clone() };
    a.dimensions == b.dimensions && a.overall == b.overall && a.records.iter().map(strip).eq(b.records.iter().map(strip))
}

/// Renames instructed query ids, relabels dimensions and reorders lists.
fn permuted(ds: &Dataset, run: &RunSet, rng: &mut ChaCha8Rng) -> (Dataset, RunSet, BTreeMap<Dimension, Dimension>) {
    let mut targets = Dimension::ALL.to_vec();
    targets.shuffle(rng);
    let relabel: BTreeMap<Dimension, Dimension> = Dimension::ALL.into_iter().zip(targets).collect();
    let mut ids: Vec<&String> = ds.instructed_queries.keys().collect();
    ids.shuffle(rng);
    let rename: BTreeMap<&str, String> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), format!("z{i:05}"))).collect();

    let mut out = ds.clone();
    out.documents.values_mut().for_each(|d| d.dimension = relabel[&d.dimension]);
    out.core_queries.values_mut().for_each(|c| c.dimension = relabel[&c.dimension]);
    out.instructed_queries = ds
        .instructed_queries
        .values()
        .map(|q| {
            let mut q = q.clone();
            q.query_id = rename[q.query_id.as_str()].clone();
            q.dimension = relabel[&q.dimension];
            (q.query_id.clone(), q)
        })
        .collect();
    let mut lists: Vec<&RankedList> = run.lists().collect();
    lists.shuffle(rng);
    let mut run2 = RunSet::new(run.system_id.clone());
    for l in lists {
        let key = if l.mode() == Mode::Original { l.query_key().to_string() } else { rename[l.query_key()].clone() };
        run2.insert(RankedList::new(key, l.mode(), l.entries().to_vec()).expect("list was valid")).expect("keys stay unique");
    }
    (out, run2, relabel)
}

fn c8_invariance() -> Check {
    let cfg = MetricConfig::default();
    let factors = [1e-6, 0.37, 1.0, 3.0, 1e6];
    let mut instances = 0;
    for seed in 0..100u64 {
        let spec = SynthSpec { dims: Dimension::ALL.to_vec(), ..random_spec(seed) };
        let ds = gen_synthetic_dataset(&spec).map_err(|e| e.to_string())?;
        for behavior in Behavior::ALL {
            let run = gen_synthetic_runs(&ds, &spec, behavior).map_err(|e| e.to_string())?;
            let base = evaluate_system(&ds, &run, &cfg).map_err(|e| e.to_string())?;
            for f in factors {
                let scaled = run.scaled(f).map_err(|e| e.to_string())?;
                let other = evaluate_system(&ds, &scaled, &cfg).map_err(|e| e.to_string())?;
                ensure(same_ignoring_scores(&base, &other), || format!("seed {seed} {behavior:?}: scaling by {f} changed metrics"))?;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed.rotate_left(17) ^ behavior as u64);
            let (ds2, run2, relabel) = permuted(&ds, &run, &mut rng);
            let other = evaluate_system(&ds2, &run2, &cfg).map_err(|e| e.to_string())?;
            ensure(base.overall == other.overall, || format!("seed {seed} {behavior:?}: overall row changed under permutation"))?;
            for row in &base.dimensions {
                let Scope::Dimension(d) = row.scope else { return Err("overall row among dimensions".into()) };
                let mut moved = other.dimensions.iter().find(|r| r.scope == Scope::Dimension(relabel[&d])).cloned().ok_or("dimension lost")?;
                moved.scope = row.scope;
                ensure(*row == moved, || format!("seed {seed} {behavior:?}: {d} row changed under permutation"))?;
            }
            instances += 1;
        }
    }
    Ok(format!("{instances} instances x {} scale factors, plus one relabelling each", factors.len()))
}

fn c9_official_bm25() -> Outcome {
    let Some(dir) = std::env::var_os(OFFICIAL_DATASET_ENV) else {
        return Outcome::Skip(format!("official dataset not available; set {OFFICIAL_DATASET_ENV} to run"));
    };
    let check = || -> Check {
        let ds = load_dataset(Path::new(&dir)).map_err(|e| e.to_string())?;
        let run = run_all_modes(&ds, &Bm25Params::default(), 100, "bm25").map_err(|e| e.to_string())?;
        let eval = evaluate_system(&ds, &run, &MetricConfig::default()).map_err(|e| e.to_string())?;
        let ori = eval.overall.ndcg.ori * 100.0;
        let ins = eval.overall.ndcg.ins * 100.0;
        let sicr = eval.overall.sicr * 100.0;
        let detail = format!("nDCG-Ori {ori:.1}, nDCG-Ins {ins:.1}, SICR {sicr:.1}");
        ensure((ori - 47.5).abs() <= 3.0 && (ins - 39.1).abs() <= 3.0 && sicr == 0.0, || detail.clone())?;
        Ok(detail)
    };
    match check() {
        Ok(d) => Outcome::Pass(d),
        Err(d) => Outcome::Fail(d),
    }
}

fn c10_throughput() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = SynthSpec { seed: 1, dims: Dimension::ALL.to_vec(), cores_per_dim: 89, conditions_per_core: 3, corpus_noise_docs: 100, run_depth: 100 };
    let ds = gen_synthetic_dataset(&spec).map_err(|e| e.to_string())?;
    let dataset_dir = tmp.path().join("dataset");
    write_dataset(&ds, &dataset_dir).map_err(|e| e.to_string())?;
    let runs_dir = tmp.path().join("runs");
    for i in 0..16u64 {
        let mut run = gen_synthetic_runs(&ds, &SynthSpec { seed: 100 + i, ..spec.clone() }, Behavior::Random).map_err(|e| e.to_string())?;
        run.system_id = format!("sys{i:02}");
        write_system(&run, runs_dir.join(&run.system_id)).map_err(|e| e.to_string())?;
    }
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_infosearch"))
        .arg("evaluate")
        .arg(&dataset_dir)
        .arg(&runs_dir)
        .args(["--format", "csv", "--out"])
        .arg(tmp.path().join("report"))
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    within_budget(
        format!("16 systems x {} queries, depth 100, {threads} thread(s): {elapsed:.2?}", ds.instructed_queries.len()),
        elapsed,
        Duration::from_secs(5),
    )
}

fn main() -> ExitCode {
    let checks: Vec<(&str, NamedCheck)> = vec![
        ("p-MRR and Robustness counter-examples", Box::new(|| c1_counter_examples().into())),
        ("WISE boundary cases", Box::new(|| c2_wise_boundaries().into())),
        ("Per. reconstruction", Box::new(|| c3_per_reconstruction().into())),
        ("differential oracle suite", Box::new(|| c4_differential().into())),
        ("WISE case totality", Box::new(|| c5_case_totality().into())),
        ("behavior ordering", Box::new(|| c6_behavior_ordering().into())),
        ("BM25 against brute force", Box::new(|| c7_bm25_brute_force().into())),
        ("scale and permutation invariance", Box::new(|| c8_invariance().into())),
        ("BM25 on the official dataset", Box::new(c9_official_bm25)),
        ("evaluate throughput", Box::new(|| c10_throughput().into())),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let (tag, detail) = match check() {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("{tag} [{:>2}] {name}: {detail}", i + 1);
    }
    println!("acceptance: {} criteria, {failed} failed", checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

impl From<Check> for Outcome {
    fn from(c: Check) -> Self {
        match c {
            Ok(d) => Outcome::Pass(d),
            Err(d) => Outcome::Fail(d),
        }
    }
}
