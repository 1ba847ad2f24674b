//! Experiment orchestration: a single TOML config per experiment, versioned
//! artifacts (JSONL datasets, JSON checkpoints, CSV tables) each carrying
//! the producing config hash in a sidecar manifest, and a consolidated
//! markdown report.
//!
//! Commands never leave partial outputs: files are written to a temporary
//! sibling and renamed into place. Deterministic commands are byte-identical
//! across reruns with the same config; the manifest carries the wall-clock
//! timings and is the only artifact that differs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::circuit::FunctorConfig;
use crate::diagram::Dialect;
use crate::interpret::{
    bias_table, check_axioms, clifford_reference, gate_trajectories, intervention_subset,
    interventions, partial_projection, InterventionAction, Model, ModelSemantics,
};
use crate::noise::{noise_sweep, ShotPlan};
use crate::planner::{estimate_resources, PathSearchConfig};
use crate::sim::SimConfig;
use crate::stats::slope_ci;
use crate::story::{
    from_jsonl, generate_tier, split_datasets, to_jsonl, Split, SplitDatasets, Story, Tier,
};
use crate::train::{
    accuracy, checkpoint_from_json, checkpoint_json, train, Evaluator, TrainConfig,
};

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dialect: Dialect,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// JSONL story files pooled and split by the dialect's protocol.
    #[serde(default)]
    pub datasets: Vec<PathBuf>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub planner: PlannerSection,
    #[serde(default)]
    pub sim: SimSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub accuracy_log_period: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection { learning_rate: 0.005, batch_size: 1, epochs: 200, accuracy_log_period: 3 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSection {
    pub s_list: Vec<f64>,
    pub shots: usize,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection { s_list: vec![1.0, 10.0, 25.0, 50.0], shots: 32 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerSection {
    pub repeats: usize,
    pub kt: f64,
}

impl Default for PlannerSection {
    fn default() -> Self {
        PlannerSection { repeats: 128, kt: 1.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSection {
    pub qubit_limit: usize,
    pub density_wire_limit: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        let d = SimConfig::default();
        SimSection { qubit_limit: d.qubit_limit, density_wire_limit: d.density_wire_limit }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        for d in &cfg.datasets {
            if !d.exists() {
                bail!("config references missing dataset file {}", d.display());
            }
        }
        Ok(cfg)
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            qubit_limit: self.sim.qubit_limit,
            density_wire_limit: self.sim.density_wire_limit,
            check_norms: false,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut c = TrainConfig::new(
            self.dialect,
            self.train.learning_rate,
            self.train.batch_size,
            self.train.epochs,
            self.seed,
        );
        c.accuracy_log_period = self.train.accuracy_log_period;
        c.parallelism = rayon::current_num_threads();
        c
    }

    /// Hash of the resolved config; embedded in every artifact manifest.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serialises");
        let mut h = Sha256::new();
        h.update(canonical.as_bytes());
        hex(&h.finalize())[..16].to_string()
    }

    pub fn load_stories(&self) -> Result<Vec<Story>> {
        let mut all = Vec::new();
        for path in &self.datasets {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            all.extend(from_jsonl(&text)?);
        }
        Ok(all)
    }

    pub fn load_splits(&self) -> Result<SplitDatasets> {
        Ok(split_datasets(self.load_stories()?, self.dialect, self.seed)?)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct Manifest<'a> {
    config_hash: &'a str,
    seed: u64,
    version: &'static str,
    command: &'a str,
    seconds: f64,
    outputs: Vec<String>,
}

/// Write atomically: temp sibling then rename.
pub fn write_artifact(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_manifest(
    dir: &Path,
    command: &str,
    config_hash: &str,
    seed: u64,
    started: std::time::Instant,
    outputs: &[PathBuf],
) -> Result<()> {
    let manifest = Manifest {
        config_hash,
        seed,
        version: env!("CARGO_PKG_VERSION"),
        command,
        seconds: started.elapsed().as_secs_f64(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    write_artifact(
        &dir.join(format!("{command}.manifest.json")),
        &serde_json::to_string_pretty(&manifest)?,
    )
}

fn csv(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

fn accuracy_csv(table: &crate::train::AccuracyTable) -> String {
    csv(
        "width,n,successes,accuracy,ci_lo,ci_hi",
        table.per_width.iter().chain(std::iter::once(&table.overall)).map(|c| {
            format!(
                "{},{},{},{},{},{}",
                if c.stratum == 0 { "all".to_string() } else { c.stratum.to_string() },
                c.n,
                c.successes,
                c.accuracy,
                c.ci_lo,
                c.ci_hi
            )
        }),
    )
}

fn load_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading checkpoint {}", path.display()))?;
    let (params, _, _) = checkpoint_from_json(&text)?;
    Ok(Model::Trained { params, config: FunctorConfig::default() })
}

fn model_from(checkpoint: Option<&Path>, dialect: Dialect) -> Result<Model> {
    match checkpoint {
        Some(p) => load_model(p),
        None => Ok(clifford_reference(dialect)),
    }
}

fn select_split(splits: SplitDatasets, which: Option<Split>) -> Vec<Story> {
    match which {
        Some(Split::Train) => splits.train,
        Some(Split::ValidA) => splits.valid_a,
        Some(Split::ValidComp) => splits.valid_comp,
        Some(Split::Test) => splits.test,
        None => splits.all().cloned().collect(),
    }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

pub fn cmd_generate(
    dialect: Dialect,
    tier: Tier,
    widths: (usize, usize),
    count: usize,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let t0 = std::time::Instant::now();
    let stories = generate_tier(dialect, tier, widths.0..=widths.1, count, seed)?;
    write_artifact(out, &to_jsonl(&stories))?;
    if let Some(dir) = out.parent() {
        let hash = format!("{dialect:?}-{tier:?}-{}-{}-{count}-{seed}", widths.0, widths.1);
        write_manifest(dir, "generate", &hash, seed, t0, &[out.to_path_buf()])?;
    }
    log::info!("wrote {} stories to {}", stories.len(), out.display());
    Ok(())
}

pub fn cmd_train(config: &ExperimentConfig) -> Result<()> {
    let t0 = std::time::Instant::now();
    let splits = config.load_splits()?;
    if splits.train.is_empty() {
        bail!("no training stories after the split; check the dataset widths/tiers");
    }
    let result = train(&splits.train, &splits.valid_a, &config.train_config())?;
    let dir = &config.output_dir;
    let log_csv = csv(
        "epoch,loss,valid_acc,train_acc",
        result.history.iter().map(|c| {
            format!(
                "{},{},{},{}",
                c.epoch,
                c.loss,
                c.valid_accuracy,
                c.train_accuracy.map(|a| a.to_string()).unwrap_or_default()
            )
        }),
    );
    let ckpt = dir.join("checkpoint.json");
    write_artifact(&ckpt, &checkpoint_json(&result.selected, config.seed, result.selected_epoch))?;
    let log_path = dir.join("train_log.csv");
    write_artifact(&log_path, &log_csv)?;
    write_manifest(dir, "train", &config.hash(), config.seed, t0, &[ckpt, log_path])?;
    log::info!(
        "selected epoch {} (valid accuracy {:.4})",
        result.selected_epoch,
        result.history.iter().map(|c| c.valid_accuracy).fold(0.0f64, f64::max)
    );
    Ok(())
}

pub fn cmd_eval(
    config: &ExperimentConfig,
    checkpoint: Option<&Path>,
    split: Option<Split>,
    trace: bool,
) -> Result<()> {
    let t0 = std::time::Instant::now();
    let stories = select_split(config.load_splits()?, split);
    if stories.is_empty() {
        bail!("the selected split is empty");
    }
    let model = model_from(checkpoint, config.dialect)?;
    let sim = config.sim_config();
    let table = accuracy(&model, &stories, &Evaluator::Exact(&sim))?;
    let dir = &config.output_dir;
    let name = match split {
        Some(Split::ValidComp) => "accuracy_valid_comp.csv",
        Some(Split::ValidA) => "accuracy_valid_a.csv",
        Some(Split::Train) => "accuracy_train.csv",
        Some(Split::Test) => "accuracy_test.csv",
        None => "accuracy_all.csv",
    };
    let acc_path = dir.join(name);
    write_artifact(&acc_path, &accuracy_csv(&table))?;
    let mut outputs = vec![acc_path];
    if let Some(fit) = table.width_trend() {
        let p = dir.join("width_trend.csv");
        write_artifact(
            &p,
            &csv(
                "slope,ci_lo,ci_hi,no_significant_decay",
                std::iter::once(format!(
                    "{},{},{},{}",
                    fit.slope,
                    fit.ci_lo,
                    fit.ci_hi,
                    fit.no_significant_decay()
                )),
            ),
        )?;
        outputs.push(p);
    }
    if trace {
        let params = model.eval_params();
        let rows: Result<Vec<String>> = stories
            .iter()
            .map(|s| {
                let (pos, neg) = model.circuits(s)?;
                let r = crate::sim::evaluate_pair(&pos, &neg, &params, &sim)?;
                Ok(format!("{},{},{},{},{}", s.id, r.p_pos, r.p_neg, r.answer, s.label))
            })
            .collect();
        let p = dir.join("eval_trace.csv");
        write_artifact(&p, &csv("instance_id,p_pos,p_neg,answer,label", rows?))?;
        outputs.push(p);
    }
    write_manifest(dir, "eval", &config.hash(), config.seed, t0, &outputs)?;
    Ok(())
}

pub fn cmd_noise_sweep(
    config: &ExperimentConfig,
    checkpoint: &Path,
    split: Option<Split>,
    max_instances: usize,
) -> Result<()> {
    let t0 = std::time::Instant::now();
    let model = load_model(checkpoint)?;
    let params = match &model {
        Model::Trained { params, .. } => params.clone(),
        _ => unreachable!(),
    };
    let mut stories = select_split(config.load_splits()?, split);
    stories.truncate(max_instances);
    let plan = ShotPlan::expectation(config.noise.shots, config.seed);
    let rows = noise_sweep(&stories, &params, &config.noise.s_list, &plan, &config.sim_config())?;
    let dir = &config.output_dir;
    let p = dir.join("noise_sweep.csv");
    write_artifact(
        &p,
        &csv(
            "s,width,n,accuracy,ci_lo,ci_hi",
            rows.iter().map(|r| {
                format!(
                    "{},{},{},{},{},{}",
                    r.s, r.cell.stratum, r.cell.n, r.cell.accuracy, r.cell.ci_lo, r.cell.ci_hi
                )
            }),
        ),
    )?;
    write_manifest(dir, "noise-sweep", &config.hash(), config.seed, t0, &[p])?;
    Ok(())
}

pub fn cmd_estimate(
    config: &ExperimentConfig,
    checkpoint: Option<&Path>,
    split: Option<Split>,
    max_instances: usize,
) -> Result<()> {
    let t0 = std::time::Instant::now();
    let model = model_from(checkpoint, config.dialect)?;
    let params = model.eval_params();
    let mut stories = select_split(config.load_splits()?, split);
    stories.truncate(max_instances);
    let search = PathSearchConfig {
        repeats: config.planner.repeats,
        kt: config.planner.kt,
        seed: config.seed,
        memory_cap_bytes: None,
        cache_dir: Some(config.output_dir.join("path_cache")),
    };
    let rows = estimate_resources(&stories, &params, &search)?;
    let dir = &config.output_dir;
    let p = dir.join("resources.csv");
    write_artifact(
        &p,
        &csv(
            "id,width,depth,edges,flops,memory_bytes,sv_baseline_bytes,reference_bytes,path_seconds",
            rows.iter().map(|r| {
                format!(
                    "{},{},{},{},{},{},{},{},{}",
                    r.id,
                    r.width,
                    r.depth,
                    r.edges,
                    r.flops,
                    r.memory_bytes,
                    r.sv_baseline_bytes,
                    crate::planner::REFERENCE_MEMORY_BYTES,
                    r.path_seconds
                )
            }),
        ),
    )?;
    write_manifest(dir, "estimate", &config.hash(), config.seed, t0, &[p])?;
    Ok(())
}

pub fn cmd_compile(
    config: &ExperimentConfig,
    checkpoint: Option<&Path>,
    split: Option<Split>,
    reuse: bool,
    target_width: Option<usize>,
) -> Result<()> {
    let t0 = std::time::Instant::now();
    let model = model_from(checkpoint, config.dialect)?;
    let params = model.eval_params();
    let stories = select_split(config.load_splits()?, split);
    let mut rows = Vec::new();
    let mut fitting = 0usize;
    for s in &stories {
        let (pos, _) = model.circuits(s)?;
        let lowered = crate::compile::lower(&pos, &params)?;
        if reuse {
            let (_, report) = crate::compile::reuse_qubits(&lowered);
            if target_width.map_or(true, |t| report.qubits_after <= t) {
                fitting += 1;
            }
            rows.push(format!(
                "{},{},{},{},{},{}",
                s.id,
                report.qubits_before,
                report.qubits_after,
                report.depth2q_before,
                report.depth2q_after,
                report.resets_inserted
            ));
        } else {
            let m = crate::compile::depth_metrics(&lowered.circuit);
            rows.push(format!(
                "{},{},{},{},{},0",
                s.id, m.width, m.width, m.two_qubit_depth, m.two_qubit_depth
            ));
        }
    }
    let dir = &config.output_dir;
    let p = dir.join("compile_metrics.csv");
    write_artifact(&p, &csv("id,width_pre,width_post,depth2q_pre,depth2q_post,resets", rows))?;
    if let Some(t) = target_width {
        log::info!(
            "{fitting}/{} instances compile to <= {t} physical qubits",
            stories.len()
        );
    }
    write_manifest(dir, "compile", &config.hash(), config.seed, t0, &[p])?;
    Ok(())
}

pub fn cmd_interpret(config: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<()> {
    let t0 = std::time::Instant::now();
    let model = model_from(checkpoint, config.dialect)?;
    let dir = &config.output_dir;
    let mut outputs = Vec::new();

    let reports = check_axioms(&model, 0.9)?;
    let p = dir.join("axioms.csv");
    write_artifact(
        &p,
        &csv(
            "id,lhs,rhs,metric,value,threshold,pass",
            reports.iter().map(|r| {
                format!(
                    "{},\"{}\",\"{}\",{},{},{},{}",
                    r.id, r.lhs, r.rhs, r.metric, r.value, r.threshold, r.pass
                )
            }),
        ),
    )?;
    outputs.push(p);

    // Bloch data: single-qubit trajectories for each turn word (trained
    // models only; the reference models are permutation matrices)
    if let Model::Trained { params, config: fc } = &model {
        let words = match config.dialect {
            Dialect::TwoDir => vec![crate::diagram::Word::TurnsAround],
            Dialect::FourDir => {
                vec![crate::diagram::Word::TurnsLeft, crate::diagram::Word::TurnsRight]
            }
        };
        let mut doc = BTreeMap::new();
        for w in words {
            let pts = gate_trajectories(w, params, fc, &[1, 2, 4, 30])?;
            doc.insert(format!("{w:?}").to_lowercase(), pts);
        }
        let p = dir.join("bloch_trajectories.json");
        write_artifact(&p, &serde_json::to_string_pretty(&doc)?)?;
        outputs.push(p);

        // partial-projection surfaces of the question states
        let sem = ModelSemantics::trained(params, fc)?;
        let mut surfaces = BTreeMap::new();
        let to_rho = |v: &Vec<num_complex::Complex64>| {
            let mut m = crate::linalg::CMat::zeros(4);
            for i in 0..4 {
                for j in 0..4 {
                    m[(i, j)] = v[i] * v[j].conj();
                }
            }
            m
        };
        surfaces.insert("same_dir", partial_projection(&to_rho(&sem.question_same), 400)?);
        if let Some(q) = &sem.question_not_same {
            surfaces.insert("not_same_dir", partial_projection(&to_rho(q), 400)?);
        }
        let p = dir.join("question_surfaces.json");
        write_artifact(&p, &serde_json::to_string_pretty(&surfaces)?)?;
        outputs.push(p);
    }
    write_manifest(dir, "interpret", &config.hash(), config.seed, t0, &outputs)?;
    Ok(())
}

pub fn cmd_interventions(
    config: &ExperimentConfig,
    checkpoint: Option<&Path>,
    max_instances: usize,
) -> Result<()> {
    let t0 = std::time::Instant::now();
    let model = model_from(checkpoint, config.dialect)?;
    let splits = config.load_splits()?;
    let mut subset = intervention_subset(&splits.valid_comp);
    subset.extend(intervention_subset(&splits.valid_a));
    subset.truncate(max_instances);
    if subset.is_empty() {
        bail!("no stories in the intervention subset");
    }
    let actions = InterventionAction::all_for(config.dialect);
    let sim = config.sim_config();
    let rows = interventions(&model, &subset, &actions, &sim)?;
    let dir = &config.output_dir;
    let p = dir.join("interventions.csv");
    write_artifact(
        &p,
        &csv(
            "action,n,correct_before,correct_after,corrected,misclassified,unchanged",
            rows.iter().map(|r| {
                format!(
                    "{},{},{},{},{},{},{}",
                    r.action,
                    r.n,
                    r.correct_before,
                    r.correct_after,
                    r.corrected,
                    r.misclassified,
                    r.unchanged
                )
            }),
        ),
    )?;
    let table = bias_table(&model, &subset, &sim)?;
    let b = dir.join("bias_by_direction.csv");
    write_artifact(
        &b,
        &csv(
            "pair,n,accuracy",
            table.by_direction_pair.iter().map(|(k, n, a)| format!("{k},{n},{a}")),
        ),
    )?;
    let b2 = dir.join("bias_by_inference_steps.csv");
    write_artifact(
        &b2,
        &csv(
            "steps,n,accuracy",
            table.by_inference_steps.iter().map(|(k, n, a)| format!("{k},{n},{a}")),
        ),
    )?;
    write_manifest(dir, "interventions", &config.hash(), config.seed, t0, &[p, b, b2])?;
    Ok(())
}

/// Aggregate whatever artifacts exist in the output directory into one
/// markdown report; missing artifacts are listed rather than fatal.
pub fn cmd_report(output_dir: &Path, report_dir: &Path) -> Result<()> {
    let artifacts = [
        ("training log", "train_log.csv"),
        ("validation accuracy", "accuracy_valid_a.csv"),
        ("compositional accuracy", "accuracy_valid_comp.csv"),
        ("width trend", "width_trend.csv"),
        ("noise sweep", "noise_sweep.csv"),
        ("contraction resources", "resources.csv"),
        ("compilation metrics", "compile_metrics.csv"),
        ("axiom checks", "axioms.csv"),
        ("interventions", "interventions.csv"),
        ("direction-pair bias", "bias_by_direction.csv"),
        ("inference-step bias", "bias_by_inference_steps.csv"),
    ];
    let mut md = String::from("# Experiment report\n\n");
    let mut missing = Vec::new();
    for (title, file) in artifacts {
        let path = output_dir.join(file);
        if !path.exists() {
            missing.push(file);
            continue;
        }
        let text = std::fs::read_to_string(&path)?;
        md.push_str(&format!("## {title}\n\n"));
        md.push_str("| ");
        let mut lines = text.lines();
        if let Some(header) = lines.next() {
            md.push_str(&header.replace(',', " | "));
            md.push_str(" |\n|");
            md.push_str(&" --- |".repeat(header.split(',').count()));
            md.push('\n');
            for line in lines {
                md.push_str("| ");
                md.push_str(&line.replace(',', " | "));
                md.push_str(" |\n");
            }
        }
        md.push('\n');
        // productivity summary alongside the compositional accuracy table
        if file == "accuracy_valid_comp.csv" {
            if let Some(fit) = slope_from_accuracy_csv(&text) {
                md.push_str(&format!(
                    "Productivity: accuracy-vs-width slope {:.5} (95% CI [{:.5}, {:.5}]); no significant decay: {}\n\n",
                    fit.slope,
                    fit.ci_lo,
                    fit.ci_hi,
                    fit.no_significant_decay()
                ));
            }
        }
    }
    if !missing.is_empty() {
        md.push_str("## Missing artifacts\n\n");
        for f in &missing {
            md.push_str(&format!("- {f}\n"));
        }
    }
    write_artifact(&report_dir.join("report.md"), &md)?;
    Ok(())
}

fn slope_from_accuracy_csv(text: &str) -> Option<crate::stats::SlopeFit> {
    let pts: Vec<(f64, f64, f64)> = text
        .lines()
        .skip(1)
        .filter_map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let w: f64 = f.first()?.parse().ok()?;
            let n: f64 = f.get(1)?.parse().ok()?;
            let acc: f64 = f.get(3)?.parse().ok()?;
            Some((w, acc, n))
        })
        .collect();
    slope_ci(&pts)
}
