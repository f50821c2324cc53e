//! The subcommands. Each one resolves its configuration, runs a pipeline,
//! writes JSON/CSV artifacts under the output directory and returns a
//! one-line summary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use fairij::data::{convert_adult, two_moons};
use fairij::influence::{influence_report, write_influence_csv};
use fairij::mitigate::{fair_ij, MitigationResult};
use fairij::model::Checkpoint;
use fairij::oracle::IhvpComparison;
use fairij::report::{self, Cell};
use fairij::{Error, IhvpConfig, IhvpMethod, MlpModel, Result};
use serde::Serialize;

use crate::config::RunConfig;
use crate::pipeline::{self, evaluate, Evaluation, Splits, TrialOutcome};

/// A JSON artifact: the resolved configuration next to the payload.
#[derive(Serialize)]
struct Artifact<'a, T: Serialize> {
    command: &'a str,
    config: BTreeMap<String, String>,
    result: &'a T,
}

fn write_artifact<T: Serialize>(out: &Path, name: &str, command: &str, cfg: &RunConfig, result: &T) -> Result<()> {
    let art = Artifact {
        command,
        config: cfg.resolved(),
        result,
    };
    report::write_json(&out.join(name), &art)
}

fn write_config(out: &Path, cfg: &RunConfig) -> Result<()> {
    report::write_text(&out.join("config.resolved"), &cfg.resolved_text())
}

fn load_model(path: &Path, splits: &Splits) -> Result<MlpModel> {
    let model = Checkpoint::load(path)?.model()?;
    if model.arch.input_dim != splits.train.n_features() {
        return Err(Error::input(format!(
            "{}: model expects {} features, data has {}",
            path.display(),
            model.arch.input_dim,
            splits.train.n_features()
        )));
    }
    Ok(model)
}

#[derive(Serialize)]
struct PrepSummary {
    source_csv: Option<String>,
    rows: usize,
    features: usize,
    feature_names: Vec<String>,
    load: Option<fairij::data::LoadReport>,
    split_rows: BTreeMap<String, usize>,
}

/// Converts the raw Adult files when given, then encodes the configured data.
pub fn prep(cfg: RunConfig, adult_dir: Option<&Path>, out: &Path) -> Result<String> {
    let mut cfg = cfg;
    if let Some(dir) = adult_dir {
        let csv = out.join("adult.csv");
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        convert_adult(&dir.join("adult.data"), &dir.join("adult.test"), &csv)?;
        cfg.data.source = crate::config::DataSource::Csv;
        cfg.data.path = Some(csv.to_string_lossy().into_owned());
    }
    let (all, load) = pipeline::load_source(&cfg)?;
    let mut split_rows = BTreeMap::new();
    for tag in all.tags().unwrap_or(&[]) {
        *split_rows.entry(tag.clone()).or_insert(0) += 1;
    }
    let summary = PrepSummary {
        source_csv: cfg.data.path.clone(),
        rows: all.len(),
        features: all.n_features(),
        feature_names: all.feature_names().to_vec(),
        load,
        split_rows,
    };
    write_config(out, &cfg)?;
    write_artifact(out, "prep.json", "prep", &cfg, &summary)?;
    Ok(format!("prep: {} rows, {} features -> {}", summary.rows, summary.features, out.display()))
}

/// Writes a two-moons CSV plus a `.cfg` with the schema that reads it back.
pub fn gen_moons(cfg: RunConfig, file: &Path) -> Result<String> {
    let d = &cfg.data;
    let data = two_moons(d.n, d.noise, d.separation, cfg.seed)?;
    let rows: Vec<Vec<Cell>> = (0..data.len())
        .map(|i| {
            let x = data.row(i);
            vec![x[0].into(), x[1].into(), data.sensitive_of(i).into(), data.label(i).into()]
        })
        .collect();
    report::write_csv(file, &["x1", "x2", "sensitive", "label"], &rows)?;
    let cfg_path = file.with_extension("cfg");
    let text = format!(
        "# generated by gen-moons: n={} noise={:?} separation={:?} seed={}\n\
         data.source=csv\ndata.path={}\nschema.label_column=label\nschema.positive_label_value=1\n\
         schema.sensitive_column=sensitive\nschema.privileged_value=1\nschema.categorical_columns=\n\
         schema.drop_columns=\nschema.split_column=none\n",
        d.n,
        d.noise,
        d.separation,
        cfg.seed,
        file.display()
    );
    report::write_text(&cfg_path, &text)?;
    Ok(format!("gen-moons: {} rows -> {} (schema {})", data.len(), file.display(), cfg_path.display()))
}

#[derive(Serialize)]
struct TrainSummary {
    selected_epoch: usize,
    final_train_loss: f64,
    params: usize,
    val: Evaluation,
    test: Evaluation,
}

pub fn train(cfg: RunConfig, out: &Path) -> Result<String> {
    let splits = pipeline::prepare(&cfg)?;
    let (model, log) = pipeline::train(&splits, &cfg)?;
    Checkpoint::new(&model, cfg.train.seed, "fairij train").save(&out.join("model.json"))?;
    let rows: Vec<Vec<Cell>> = log
        .epochs
        .iter()
        .map(|e| vec![e.epoch.into(), e.train_loss.into(), e.val_accuracy.into()])
        .collect();
    report::write_csv(&out.join("train_log.csv"), &["epoch", "train_loss", "val_accuracy"], &rows)?;
    let summary = TrainSummary {
        selected_epoch: log.selected_epoch,
        final_train_loss: log.epochs.last().map_or(f64::NAN, |e| e.train_loss),
        params: model.dim(),
        val: evaluate(&model, &splits.val)?,
        test: evaluate(&model, &splits.test)?,
    };
    write_config(out, &cfg)?;
    write_artifact(out, "train.json", "train", &cfg, &summary)?;
    Ok(format!(
        "train: epoch {} selected, val acc {:.4}, test acc {:.4}, test dp {} -> {}",
        summary.selected_epoch,
        summary.val.accuracy,
        summary.test.accuracy,
        hard_text(&summary.test.dp),
        out.join("model.json").display()
    ))
}

#[derive(Serialize)]
struct InfluenceSummary {
    metric: fairij::FairnessMetricKind,
    evaluated_on: String,
    surrogate: f64,
    degenerate: bool,
    positive_count: usize,
    scores: Vec<f64>,
    loss_scores: Option<Vec<f64>>,
}

pub fn influence(cfg: RunConfig, model_path: &Path, out: &Path) -> Result<String> {
    let splits = pipeline::prepare(&cfg)?;
    let model = load_model(model_path, &splits)?;
    let rep = influence_report(&model, &splits.train, Some(&splits.val), cfg.mitigate.metric, &cfg.ihvp, true)?;
    write_influence_csv(&out.join("influence.csv"), &rep, &splits.train, false)?;
    write_influence_csv(&out.join("influence_sorted.csv"), &rep, &splits.train, true)?;
    let summary = InfluenceSummary {
        metric: rep.metric,
        evaluated_on: rep.evaluated_on.clone(),
        surrogate: rep.surrogate,
        degenerate: rep.degenerate,
        positive_count: rep.positive_count(),
        scores: rep.scores.clone(),
        loss_scores: rep.loss_scores.clone(),
    };
    write_config(out, &cfg)?;
    write_artifact(out, "influence.json", "influence", &cfg, &summary)?;
    Ok(format!(
        "influence: {} scores ({} positive), surrogate {:.4} -> {}",
        summary.scores.len(),
        summary.positive_count,
        summary.surrogate,
        out.join("influence.csv").display()
    ))
}

fn candidate_rows(trial: Option<usize>, r: &MitigationResult) -> Vec<Vec<Cell>> {
    r.candidates
        .iter()
        .map(|c| {
            let mut row = Vec::with_capacity(6);
            if let Some(t) = trial {
                row.push(t.into());
            }
            row.extend([c.k.into(), c.scale.into(), c.val.hard.into(), c.val.surrogate.into(), c.val.accuracy.into()]);
            row
        })
        .collect()
}

const CANDIDATE_HEADER: [&str; 5] = ["k", "scale", "val_hard", "val_surrogate", "val_accuracy"];

pub fn mitigate(cfg: RunConfig, model_path: &Path, out: &Path) -> Result<String> {
    let splits = pipeline::prepare(&cfg)?;
    let model = load_model(model_path, &splits)?;
    let r = fair_ij(&model, &splits.train, &splits.val, Some(&splits.test), &cfg.mitigation())?;
    let edited = model.with_params(r.theta_fair.clone())?;
    Checkpoint::new(&edited, cfg.train.seed, "fairij mitigate").save(&out.join("model_fair.json"))?;
    report::write_csv(&out.join("candidates.csv"), &CANDIDATE_HEADER, &candidate_rows(None, &r))?;
    write_config(out, &cfg)?;
    write_artifact(out, "mitigation.json", "mitigate", &cfg, &r)?;
    let test = |m: &Option<fairij::mitigate::Metrics>| m.as_ref().map_or((f64::NAN, f64::NAN), |m| (m.hard, m.accuracy));
    let (hb, ab) = test(&r.before.test);
    let (ha, aa) = test(&r.after.test);
    let status = if r.no_op { ", no-op" } else { "" };
    Ok(format!(
        "mitigate: k={} scale={}{status}, test {} {:.4} -> {:.4}, acc {:.4} -> {:.4}",
        r.chosen_k,
        r.chosen_scale,
        r.config.metric.name(),
        hb,
        ha,
        ab,
        aa
    ))
}

#[derive(Serialize)]
struct EvalSummary {
    train: Evaluation,
    val: Evaluation,
    test: Evaluation,
}

pub fn eval(cfg: RunConfig, model_path: &Path, out: &Path) -> Result<String> {
    let splits = pipeline::prepare(&cfg)?;
    let model = load_model(model_path, &splits)?;
    let s = EvalSummary {
        train: evaluate(&model, &splits.train)?,
        val: evaluate(&model, &splits.val)?,
        test: evaluate(&model, &splits.test)?,
    };
    write_config(out, &cfg)?;
    write_artifact(out, "eval.json", "eval", &cfg, &s)?;
    Ok(format!(
        "eval: test acc {:.4}, dp {}, eo {}, eqopp {}",
        s.test.accuracy,
        hard_text(&s.test.dp),
        hard_text(&s.test.eo),
        hard_text(&s.test.eqopp)
    ))
}

fn hard_text(r: &Option<fairij::fairness::MetricReport>) -> String {
    r.as_ref().map_or_else(|| "undefined".into(), |r| format!("{:.4}", r.hard))
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub trial: usize,
    pub method: String,
    pub mad: f64,
    pub r_squared: f64,
    pub rescale: f64,
}

#[derive(Serialize)]
struct BenchSummary {
    rows: Vec<BenchRow>,
    mean_r_squared: BTreeMap<String, f64>,
    mean_mad: BTreeMap<String, f64>,
}

/// Influence scores of every approximate IHVP method against the exact one,
/// each rescaled to the mean of the exact scores, over `trials` runs.
pub fn ihvp_bench(cfg: RunConfig, out: &Path) -> Result<String> {
    let (all, _) = pipeline::load_source(&cfg)?;
    let kind = cfg.mitigate.metric;
    let mut rows = Vec::new();
    let mut score_rows = Vec::new();
    for t in 0..cfg.trials {
        let ct = cfg.for_trial(t);
        let splits = pipeline::make_splits(&all, &ct)?;
        let (model, _) = pipeline::train(&splits, &ct)?;
        let with = |method| IhvpConfig { method, ..ct.ihvp.clone() };
        let scores = |method| -> Result<Vec<f64>> {
            Ok(influence_report(&model, &splits.train, Some(&splits.val), kind, &with(method), false)?.scores)
        };
        let exact = scores(IhvpMethod::Exact)?;
        let mut rescaled = Vec::new();
        for method in [IhvpMethod::Woodfisher, IhvpMethod::Neumann] {
            let cmp = IhvpComparison::from_scores(method.name(), "exact", &scores(method)?, &exact)?;
            rows.push(BenchRow {
                trial: t,
                method: method.name().into(),
                mad: cmp.mad,
                r_squared: cmp.r_squared,
                rescale: cmp.rescale_a,
            });
            rescaled.push(cmp.scores_a);
        }
        for n in 0..exact.len() {
            score_rows.push(vec![t.into(), n.into(), exact[n].into(), rescaled[0][n].into(), rescaled[1][n].into()]);
        }
    }
    let mut mean_r_squared = BTreeMap::new();
    let mut mean_mad = BTreeMap::new();
    for method in ["woodfisher", "neumann"] {
        let sel: Vec<&BenchRow> = rows.iter().filter(|r| r.method == method).collect();
        let n = sel.len() as f64;
        mean_r_squared.insert(method.to_string(), sel.iter().map(|r| r.r_squared).sum::<f64>() / n);
        mean_mad.insert(method.to_string(), sel.iter().map(|r| r.mad).sum::<f64>() / n);
    }
    let table: Vec<Vec<Cell>> = rows
        .iter()
        .map(|r| vec![r.trial.into(), r.method.as_str().into(), r.mad.into(), r.r_squared.into(), r.rescale.into()])
        .collect();
    report::write_csv(&out.join("ihvp_bench.csv"), &["trial", "method", "mad", "r_squared", "rescale"], &table)?;
    report::write_csv(
        &out.join("ihvp_scores.csv"),
        &["trial", "index", "exact", "woodfisher", "neumann"],
        &score_rows,
    )?;
    let summary = BenchSummary {
        rows,
        mean_r_squared,
        mean_mad,
    };
    write_config(out, &cfg)?;
    write_artifact(out, "ihvp_bench.json", "ihvp-bench", &cfg, &summary)?;
    Ok(format!(
        "ihvp-bench: {} trials, mean R2 woodfisher {:.4}, neumann {:.4}",
        cfg.trials, summary.mean_r_squared["woodfisher"], summary.mean_r_squared["neumann"]
    ))
}

/// Means over trials of the sweep's headline numbers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepMeans {
    pub test_accuracy_before: f64,
    pub test_accuracy_after: f64,
    pub test_hard_before: f64,
    pub test_hard_after: f64,
    pub val_hard_before: f64,
    pub val_hard_after: f64,
    pub chosen_k: f64,
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    trials: &'a [TrialOutcome],
    mean: SweepMeans,
}

const SWEEP_HEADER: [&str; 17] = [
    "trial",
    "seed",
    "train_seed",
    "instance_order_seed",
    "selected_epoch",
    "chosen_k",
    "chosen_scale",
    "positive_count",
    "no_op",
    "val_accuracy_before",
    "val_accuracy_after",
    "val_hard_before",
    "val_hard_after",
    "test_accuracy_before",
    "test_accuracy_after",
    "test_hard_before",
    "test_hard_after",
];

fn sweep_row(o: &TrialOutcome) -> Vec<Cell> {
    let r = &o.result;
    let (tb, ta) = (r.before.test.as_ref().expect("test set"), r.after.test.as_ref().expect("test set"));
    vec![
        o.trial.into(),
        Cell::Int(o.seed as i64),
        Cell::Int(o.train_seed as i64),
        Cell::Int(o.instance_order_seed as i64),
        o.selected_epoch.into(),
        r.chosen_k.into(),
        r.chosen_scale.into(),
        r.positive_count.into(),
        Cell::Text(r.no_op.to_string()),
        r.before.val.accuracy.into(),
        r.after.val.accuracy.into(),
        r.before.val.hard.into(),
        r.after.val.hard.into(),
        tb.accuracy.into(),
        ta.accuracy.into(),
        tb.hard.into(),
        ta.hard.into(),
    ]
}

/// Runs `trials` independent trials, at most `jobs` at a time. Results are
/// collected by trial index, so the artifacts do not depend on `jobs`.
pub fn sweep(cfg: RunConfig, jobs: usize, out: &Path) -> Result<String> {
    let (all, _) = pipeline::load_source(&cfg)?;
    let n = cfg.trials;
    let slots: Mutex<Vec<Option<Result<TrialOutcome>>>> = Mutex::new((0..n).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, n) {
            s.spawn(|| loop {
                let t = next.fetch_add(1, Ordering::SeqCst);
                if t >= n {
                    break;
                }
                let res = pipeline::run_trial(&all, &cfg, t);
                if let Ok(o) = &res {
                    eprintln!("trial {t}: k={} test hard {:.4} -> {:.4}", o.result.chosen_k, hard(&o.result).0, hard(&o.result).1);
                }
                slots.lock().expect("no poisoned trial")[t] = Some(res);
            });
        }
    });
    let outcomes: Vec<TrialOutcome> = slots
        .into_inner()
        .expect("no poisoned trial")
        .into_iter()
        .map(|r| r.expect("every trial ran"))
        .collect::<Result<_>>()?;

    let mean = |f: &dyn Fn(&TrialOutcome) -> f64| outcomes.iter().map(f).sum::<f64>() / n as f64;
    let test = |o: &TrialOutcome, after: bool| {
        let s = if after { &o.result.after } else { &o.result.before };
        s.test.clone().expect("test set")
    };
    let means = SweepMeans {
        test_accuracy_before: mean(&|o| test(o, false).accuracy),
        test_accuracy_after: mean(&|o| test(o, true).accuracy),
        test_hard_before: mean(&|o| test(o, false).hard),
        test_hard_after: mean(&|o| test(o, true).hard),
        val_hard_before: mean(&|o| o.result.before.val.hard),
        val_hard_after: mean(&|o| o.result.after.val.hard),
        chosen_k: mean(&|o| o.result.chosen_k as f64),
    };

    report::write_csv(&out.join("sweep.csv"), &SWEEP_HEADER, &outcomes.iter().map(sweep_row).collect::<Vec<_>>())?;
    let mut header = vec!["trial"];
    header.extend(CANDIDATE_HEADER);
    let points: Vec<Vec<Cell>> = outcomes.iter().flat_map(|o| candidate_rows(Some(o.trial), &o.result)).collect();
    report::write_csv(&out.join("sweep_points.csv"), &header, &points)?;
    write_config(out, &cfg)?;
    write_artifact(
        out,
        "sweep.json",
        "sweep",
        &cfg,
        &SweepSummary {
            trials: &outcomes,
            mean: means.clone(),
        },
    )?;
    Ok(format!(
        "sweep: {n} trials, mean test {} {:.4} -> {:.4}, accuracy {:.4} -> {:.4} -> {}",
        cfg.mitigate.metric.name(),
        means.test_hard_before,
        means.test_hard_after,
        means.test_accuracy_before,
        means.test_accuracy_after,
        out.join("sweep.csv").display()
    ))
}

fn hard(r: &MitigationResult) -> (f64, f64) {
    let get = |m: &Option<fairij::mitigate::Metrics>| m.as_ref().map_or(f64::NAN, |m| m.hard);
    (get(&r.before.test), get(&r.after.test))
}

/// Default model path inside an output directory.
pub fn default_model(out: &Path) -> PathBuf {
    out.join("model.json")
}
