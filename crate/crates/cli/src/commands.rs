use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use smoothctl::control::{default_grid, SweepCurve};
use smoothctl::experiments::{
    run_sweep, run_trajectories, smoothness_heatmap, sweep_setup, SweepExperiment, TrajectorySystem,
    TRAJECTORY_ITERATIONS,
};
use smoothctl::graph::Graph;
use smoothctl::linalg::Matrix;
use smoothctl::models::{GraphContext, LayerKind, Model, ModelConfig};
use smoothctl::properties::{self, property_names, run_property};
use smoothctl::train::{mean_std, parse_features_csv, sbm_dataset, t_score, train, Dataset, SbmSpec, TrainConfig};

use crate::svg::{self, Series, PALETTE};

pub enum CliError {
    /// Bad arguments or unreadable inputs; exit status 2.
    Input(String),
    /// A property or assertion did not hold; exit status 1.
    Failed(String),
}

impl From<smoothctl::Error> for CliError {
    fn from(e: smoothctl::Error) -> Self {
        use smoothctl::Error as E;
        match e {
            E::Input(_) | E::Config(_) | E::Parse(_) | E::Io(_) | E::Index(_) | E::Shape { .. } | E::Unsupported(_) => {
                CliError::Input(e.to_string())
            }
            _ => CliError::Failed(e.to_string()),
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

/// Largest allowed excess of a panel-a curve over `‖z‖_M⊥`.
pub const SWEEP_DIST_SLACK: f64 = 1e-10;
/// Steps counted as "early" when looking for trajectories that move away.
pub const EARLY_STEPS: usize = 5;
/// Relative size below which a distance to M is rounding noise; `‖h‖` grows
/// like `1.2^t` along the eigenvector.
pub const RATIO_FLOOR: f64 = 1e-8;

pub struct Output {
    dir: PathBuf,
}

impl Output {
    pub fn new(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Input(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Output { dir: dir.to_path_buf() })
    }

    pub fn write(&self, name: &str, contents: &str) -> CliResult {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> CliResult {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Failed(e.to_string()))?;
        text.push('\n');
        self.write(name, &text)
    }
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

pub fn require_seed(seed: Option<u64>, command: &str) -> CliResult<u64> {
    seed.ok_or_else(|| CliError::Input(format!("`{command}` needs --seed")))
}

fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    if jobs <= 1 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

// verify

pub fn verify(seed: u64, out: &Output, jobs: usize, fault: Option<&str>) -> CliResult {
    let names = property_names();
    if let Some(f) = fault {
        if !names.contains(&f) {
            return Err(CliError::Input(format!("unknown property `{f}`")));
        }
    }
    let outcomes = with_jobs(jobs, || {
        names
            .par_iter()
            .map(|&name| run_property(name, seed, fault == Some(name)))
            .collect::<smoothctl::Result<Vec<_>>>()
    })??;
    let report = properties::report(seed, outcomes);
    let mut json = report.to_json()?;
    json.push('\n');
    out.write("verify.json", &json)?;
    for p in &report.properties {
        println!(
            "{} {} cases={} worst={:.3e} tol={:.1e}",
            if p.passed { "ok  " } else { "FAIL" },
            p.name,
            p.cases,
            p.worst_residual,
            p.tolerance
        );
    }
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Failed(format!(
            "failing properties: {}",
            report.failing().join(", ")
        )))
    }
}

// sweep

#[derive(Serialize)]
struct SweepSummary {
    seed: u64,
    slope: f64,
    points: usize,
    input_s: f64,
    input_dist: f64,
    relu_min_s: f64,
    relu_max_s: f64,
    leaky_min_s: f64,
    leaky_max_s: f64,
    worst_dist_excess: f64,
    below_input_s: bool,
    above_input_s: bool,
}

fn concat(parts: Vec<SweepCurve>) -> SweepCurve {
    let mut it = parts.into_iter();
    let mut curve = it.next().expect("at least one chunk");
    for p in it {
        curve.alphas.extend(p.alphas);
        curve.s.extend(p.s);
        curve.dist.extend(p.dist);
    }
    curve
}

pub fn sweep(seed: u64, slope: f64, out: &Output, jobs: usize) -> CliResult {
    let setup = sweep_setup(seed)?;
    let grid = default_grid();
    let chunk = grid.len().div_ceil(jobs.max(1));
    let parts = with_jobs(jobs, || {
        grid.par_chunks(chunk)
            .map(|alphas| run_sweep(&setup, slope, alphas))
            .collect::<smoothctl::Result<Vec<_>>>()
    })??;
    let (relu, leaky) = parts.into_iter().map(|p| (p.relu, p.leaky)).unzip();
    let ex = SweepExperiment {
        slope,
        relu: concat(relu),
        leaky: concat(leaky),
    };

    out.write("sweep_relu.csv", &ex.relu.to_csv())?;
    out.write("sweep_leaky.csv", &ex.leaky.to_csv())?;

    let pts = |c: &SweepCurve, ys: &[f64]| c.alphas.iter().copied().zip(ys.iter().copied()).collect::<Vec<_>>();
    let flat = |v: f64| vec![(grid[0], v), (grid[grid.len() - 1], v)];
    let leaky_name = format!("leaky ReLU ({slope})");
    out.write(
        "sweep_a.svg",
        &svg::line_chart(
            "distance to M of the activated output",
            "alpha",
            "||sigma(z - alpha e)||_M-perp",
            &[
                Series::new("ReLU", PALETTE[0], pts(&ex.relu, &ex.relu.dist)),
                Series::new(leaky_name.clone(), PALETTE[1], pts(&ex.leaky, &ex.leaky.dist)),
                Series::new("||z||_M-perp", PALETTE[5], flat(ex.input_dist())).dashed(),
            ],
        ),
    )?;
    out.write(
        "sweep_b.svg",
        &svg::line_chart(
            "normalized smoothness of the activated output",
            "alpha",
            "s(sigma(z - alpha e))",
            &[
                Series::new("ReLU", PALETTE[0], pts(&ex.relu, &ex.relu.s)),
                Series::new(leaky_name, PALETTE[1], pts(&ex.leaky, &ex.leaky.s)),
                Series::new("s(z)", PALETTE[5], flat(ex.input_s())).dashed(),
            ],
        ),
    )?;

    let summary = SweepSummary {
        seed,
        slope,
        points: ex.relu.len(),
        input_s: ex.input_s(),
        input_dist: ex.input_dist(),
        relu_min_s: ex.relu.min_s(),
        relu_max_s: ex.relu.max_s(),
        leaky_min_s: ex.leaky.min_s(),
        leaky_max_s: ex.leaky.max_s(),
        worst_dist_excess: ex.worst_dist_excess(),
        below_input_s: ex.min_s() < ex.input_s(),
        above_input_s: ex.max_s() > ex.input_s(),
    };
    out.json("sweep.json", &summary)?;
    println!(
        "s(z) = {:.4}, s range [{:.4}, {:.4}], ||z||_M-perp = {:.4}, worst excess {:.2e}",
        summary.input_s,
        ex.min_s(),
        ex.max_s(),
        summary.input_dist,
        summary.worst_dist_excess
    );
    if summary.worst_dist_excess.is_nan() || summary.worst_dist_excess > SWEEP_DIST_SLACK {
        return Err(CliError::Failed(format!(
            "a sweep curve exceeds ||z||_M-perp by {:.3e}",
            summary.worst_dist_excess
        )));
    }
    Ok(())
}

// trajectory

#[derive(Serialize)]
struct TrajectorySummary {
    alpha: f64,
    weight: f64,
    bias: [f64; 2],
    eigenvalues: [f64; 2],
    eigenvector: [f64; 2],
    contraction_factor: f64,
    /// Largest `dist[t+1] / dist[t]` over steps with `dist[t] > RATIO_FLOOR·‖h_t‖`.
    max_step_ratio: f64,
    /// Trajectories whose distance to M grows within the first few steps.
    early_increases: usize,
    final_max_dist: f64,
}

pub fn trajectory(alpha: f64, out: &Output) -> CliResult {
    let sys = TrajectorySystem::new(alpha)?;
    let trajs = run_trajectories(&sys, TRAJECTORY_ITERATIONS);

    let mut csv = String::from("trajectory,step,x,y,dist\n");
    for (k, t) in trajs.iter().enumerate() {
        for (i, (p, d)) in t.points.iter().zip(&t.dist).enumerate() {
            let _ = writeln!(csv, "{k},{i},{},{},{d}", p[0], p[1]);
        }
    }
    out.write("trajectories.csv", &csv)?;

    let mut max_ratio: f64 = 0.0;
    let mut early = 0;
    for t in &trajs {
        for (i, w) in t.dist.windows(2).enumerate() {
            let p = t.points[i];
            if w[0] > RATIO_FLOOR * p[0].hypot(p[1]) {
                max_ratio = max_ratio.max(w[1] / w[0]);
            }
        }
        if t.dist.windows(2).take(EARLY_STEPS).any(|w| w[1] > w[0]) {
            early += 1;
        }
    }
    let final_max_dist = trajs.iter().map(|t| *t.dist.last().unwrap_or(&0.0)).fold(0.0, f64::max);

    let paths: Vec<Vec<(f64, f64)>> = trajs
        .iter()
        .map(|t| t.points.iter().map(|p| (p[0], p[1])).collect())
        .collect();
    let e = sys.e;
    let line = Series::new(
        "eigenspace M",
        PALETTE[1],
        vec![(-1.5 * e[0], -1.5 * e[1]), (1.5 * e[0], 1.5 * e[1])],
    );
    out.write(
        "trajectory.svg",
        &svg::trajectory_plot(&format!("node feature trajectories, alpha = {alpha}"), &paths, &[line]),
    )?;

    let summary = TrajectorySummary {
        alpha,
        weight: sys.weight,
        bias: sys.bias,
        eigenvalues: sys.eigenvalues,
        eigenvector: sys.e,
        contraction_factor: sys.contraction_factor(),
        max_step_ratio: max_ratio,
        early_increases: early,
        final_max_dist,
    };
    out.json("trajectory.json", &summary)?;
    println!(
        "alpha {alpha}: max step ratio {:.4} (bound {:.4}), {early} of {} trajectories move away early",
        max_ratio,
        summary.contraction_factor,
        trajs.len()
    );
    Ok(())
}

// datasets and configs

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<ModelConfig>,
    pub train: Option<TrainConfig>,
    pub sbm: Option<SbmSpec>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                serde_json::from_str(&read(p)?).map_err(|e| CliError::Input(format!("config {}: {e}", p.display())))
            }
        }
    }
}

pub struct DataArgs<'a> {
    pub synthetic: bool,
    pub graph: Option<&'a Path>,
    pub features: Option<&'a Path>,
    pub labels: Option<&'a Path>,
    pub splits: Option<&'a Path>,
}

impl DataArgs<'_> {
    fn missing(&self, need_labels: bool) -> Vec<&'static str> {
        let mut miss = Vec::new();
        if self.graph.is_none() {
            miss.push("--graph");
        }
        if self.features.is_none() {
            miss.push("--features");
        }
        if need_labels && self.labels.is_none() {
            miss.push("--labels");
        }
        if need_labels && self.splits.is_none() {
            miss.push("--splits");
        }
        miss
    }

    fn dataset(&self, seed: Option<u64>, sbm: &SbmSpec, command: &str) -> CliResult<Dataset> {
        if self.synthetic {
            return Ok(sbm_dataset(sbm, require_seed(seed, command)?)?);
        }
        let miss = self.missing(true);
        if !miss.is_empty() {
            return Err(CliError::Input(format!(
                "`{command}` needs --synthetic or {}",
                miss.join(", ")
            )));
        }
        let p = |x: Option<&Path>| x.expect("checked").to_path_buf();
        Ok(Dataset::load(
            &p(self.graph),
            &p(self.features),
            &p(self.labels),
            &p(self.splits),
        )?)
    }

    /// Graph and `d×n` features only.
    fn graph_and_features(&self, seed: Option<u64>, sbm: &SbmSpec, command: &str) -> CliResult<(Graph, Matrix)> {
        if self.synthetic {
            let ds = sbm_dataset(sbm, require_seed(seed, command)?)?;
            return Ok((ds.graph, ds.features));
        }
        let miss = self.missing(false);
        if !miss.is_empty() {
            return Err(CliError::Input(format!(
                "`{command}` needs --synthetic or {}",
                miss.join(", ")
            )));
        }
        let g = Graph::parse(&read(self.graph.expect("checked"))?)?;
        let x = parse_features_csv(&read(self.features.expect("checked"))?)?;
        Ok((g, x))
    }
}

// train

pub struct TrainArgs {
    pub seed: Option<u64>,
    pub kind: Option<LayerKind>,
    pub layers: Option<usize>,
    pub hidden: Option<usize>,
    pub dropout: Option<f64>,
    pub epochs: Option<usize>,
    pub runs: usize,
}

#[derive(Serialize)]
struct RunsSummary {
    seeds: Vec<u64>,
    test_accuracy: Vec<f64>,
    mean: f64,
    std: f64,
}

pub fn train_cmd(args: &TrainArgs, data: &DataArgs, cfg: RunConfig, out: &Output, jobs: usize) -> CliResult {
    let sbm = cfg.sbm.unwrap_or_default();
    let seed = args.seed;
    let mut model_cfg = cfg.model.unwrap_or_else(|| ModelConfig::new(LayerKind::Gcn, 2, 16));
    if let Some(k) = args.kind {
        model_cfg.kind = k;
    }
    if let Some(l) = args.layers {
        model_cfg.layers = l;
    }
    if let Some(h) = args.hidden {
        model_cfg.hidden_dim = h;
    }
    if let Some(d) = args.dropout {
        model_cfg.dropout = d;
    }
    let mut train_cfg = cfg.train.unwrap_or_default();
    if let Some(e) = args.epochs {
        train_cfg.max_epochs = e;
        train_cfg.patience = train_cfg.patience.min(e);
    }
    if args.runs == 0 {
        return Err(CliError::Input("--runs must be positive".into()));
    }
    let base = match seed {
        Some(s) => s,
        None if data.synthetic || args.runs > 1 || model_cfg.dropout > 0.0 => require_seed(None, "train")?,
        None => model_cfg.seed,
    };

    let ds = data.dataset(Some(base), &sbm, "train")?;
    let ctx = GraphContext::new(ds.graph.clone())?;
    let seeds: Vec<u64> = (0..args.runs as u64).map(|k| base + k).collect();
    let results = with_jobs(jobs, || {
        seeds
            .par_iter()
            .map(|&s| {
                let mut mc = model_cfg.clone();
                mc.seed = s;
                let tc = TrainConfig {
                    seed: s,
                    ..train_cfg.clone()
                };
                let mut model = Model::new(mc, ds.features.rows(), ds.num_classes.max(2), ctx.basis.m)?;
                let run = train(&mut model, &ds, &ctx, &tc)?;
                Ok((model, run))
            })
            .collect::<smoothctl::Result<Vec<_>>>()
    })??;

    let (model, run) = &results[0];
    let mut model_json = model.to_json()?;
    model_json.push('\n');
    out.write("model.json", &model_json)?;
    let mut run_json = run.to_json()?;
    run_json.push('\n');
    out.write("run.json", &run_json)?;

    let accs: Vec<f64> = results.iter().map(|(_, r)| r.test_accuracy).collect();
    if args.runs > 1 {
        let mut list = String::new();
        for a in &accs {
            let _ = writeln!(list, "{a}");
        }
        out.write("accuracies.txt", &list)?;
        let (mean, std) = mean_std(&accs);
        out.json(
            "runs.json",
            &RunsSummary {
                seeds: seeds.clone(),
                test_accuracy: accs.clone(),
                mean,
                std,
            },
        )?;
    }
    for ((_, r), s) in results.iter().zip(&seeds) {
        println!(
            "seed {s}: {} x{} test accuracy {:.4} (best epoch {} of {})",
            model.config.kind,
            model.depth(),
            r.test_accuracy,
            r.best_epoch,
            r.epochs_run
        );
    }
    Ok(())
}

// heatmap

pub fn heatmap(
    model_path: Option<&Path>,
    data: &DataArgs,
    seed: Option<u64>,
    cfg: RunConfig,
    out: &Output,
) -> CliResult {
    let path = model_path.ok_or_else(|| CliError::Input("`heatmap` needs --model PATH".into()))?;
    let model = Model::from_json(&read(path)?)?;
    let (graph, x) = data.graph_and_features(seed, &cfg.sbm.unwrap_or_default(), "heatmap")?;
    let ctx = GraphContext::new(graph)?;
    let (_, layers) = model.infer(&ctx, &x)?;
    let m = smoothness_heatmap(&layers, &ctx.basis)?;

    let mut csv = String::from("layer");
    for j in 0..m.cols() {
        let _ = write!(csv, ",dim{j}");
    }
    csv.push('\n');
    let mut rows = Vec::with_capacity(m.rows());
    for l in 0..m.rows() {
        let row = m.row(l).to_vec();
        let _ = write!(csv, "{l}");
        for v in &row {
            let _ = write!(csv, ",{v}");
        }
        csv.push('\n');
        rows.push(row);
    }
    out.write("heatmap.csv", &csv)?;
    out.write(
        "heatmap.svg",
        &svg::heatmap(
            &format!(
                "normalized smoothness per dimension, {} x{}",
                model.config.kind,
                model.depth()
            ),
            "layer",
            "feature dimension",
            &rows,
            (0.0, 1.0),
        ),
    )?;
    let last = rows.last().expect("at least H0");
    println!(
        "{} x {} matrix; last layer s in [{:.5}, {:.5}]",
        m.rows(),
        m.cols(),
        last.iter().copied().fold(f64::INFINITY, f64::min),
        last.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    );
    Ok(())
}

// ttest

#[derive(Serialize)]
struct TTest {
    n: usize,
    mean_a: f64,
    std_a: f64,
    mean_b: f64,
    std_b: f64,
    t: f64,
}

/// Numbers separated by whitespace or commas.
pub fn parse_list(text: &str) -> CliResult<Vec<f64>> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| CliError::Input(format!("not a number: `{t}`")))
        })
        .collect()
}

pub fn ttest(a: &Path, b: &Path, out: &Output) -> CliResult {
    let xs = parse_list(&read(a)?)?;
    let ys = parse_list(&read(b)?)?;
    if xs.len() != ys.len() {
        return Err(CliError::Input(format!(
            "lists differ in length: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    let (mean_a, std_a) = mean_std(&xs);
    let (mean_b, std_b) = mean_std(&ys);
    // Equal means give 0 even when neither list has any spread.
    let t = if mean_a == mean_b {
        0.0
    } else {
        t_score(mean_a, std_a, mean_b, std_b, xs.len())?
    };
    let res = TTest {
        n: xs.len(),
        mean_a,
        std_a,
        mean_b,
        std_b,
        t,
    };
    out.json("ttest.json", &res)?;
    println!(
        "n = {}, a = {mean_a:.4} ± {std_a:.4}, b = {mean_b:.4} ± {std_b:.4}, t = {t:.4}",
        res.n
    );
    Ok(())
}
