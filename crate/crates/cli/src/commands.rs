use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use weakpovm::algebra::pauli_decompose;
use weakpovm::engine::{
    compare_statistics, oracle_enumerate, prepare, run_pipeline, PipelineRun, StateSampler,
};
use weakpovm::povm::{born_probabilities, find_dependence};
use weakpovm::{HermitianOp, LipovmTree, Povm, PpovmPlan, Tolerances, WalkConfig};

use crate::bundle::*;
use crate::io::{load_povm_file, load_state, sampler_for, LoadedPovm, StateSpec};
use crate::{CliError, CliResult, Status};

/// Residual limit for the exact identities of the decomposition.
const IDENTITY_LIMIT: f64 = 1e-10;
/// Oracle total probability and operator cross-check limit.
const ORACLE_LIMIT: f64 = 1e-12;

#[derive(Debug, Clone, Args)]
pub struct PovmArgs {
    /// POVM file: {"elements": [2x2 matrices of [re, im] pairs], "labels": [...]}
    pub povm: PathBuf,
    /// Directory for bundle.json and CSV outputs; created if missing
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct WalkArgs {
    /// State file ({"ket": [a, b]} or {"density": M}) or the word `haar`.
    /// A density matrix is sampled as its eigen-ensemble: each trajectory
    /// starts in eigenvector i with probability equal to eigenvalue i.
    /// `haar` draws uniformly random pure states (average I/2)
    #[arg(long)]
    pub state: String,
    /// Swap angle of every weak step, in (0, pi/4)
    #[arg(long, default_value_t = DEFAULT_PHI)]
    pub phi: f64,
    /// A walk stops once some coordinate reaches 1 - eps; in (0, 0.1)
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub eps: f64,
    /// Step budget per trajectory [default: 20 ceil(ln(1/eps) / (2 ln(1/cos phi)))]
    #[arg(long)]
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub target: PovmArgs,
    #[command(flatten)]
    pub walk: WalkArgs,
    /// Number of trajectories
    #[arg(long, default_value_t = DEFAULT_TRAJECTORIES)]
    pub traj: usize,
    /// Run seed; trajectory t uses ChaCha8 stream t of this seed
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Largest accepted |z| of a label frequency against the Born rule
    #[arg(long, default_value_t = DEFAULT_Z_LIMIT)]
    pub z_limit: f64,
    /// Also write trajectories.csv
    /// (trajectory, leaf, steps, vertex, output, final_infidelity)
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub target: PovmArgs,
    #[command(flatten)]
    pub walk: WalkArgs,
    /// Deepest string length enumerated
    #[arg(long)]
    pub depth: usize,
    /// Depths reported are 0, stride, 2 stride, ... and `depth` itself
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
}

/// A named output file.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone)]
pub struct CommandOutput {
    pub bundle: ResultBundle,
    pub summary: String,
    pub artifacts: Vec<Artifact>,
}

impl CommandOutput {
    pub fn status(&self) -> Status {
        self.bundle.status
    }
}

fn walk_config(args: Option<&WalkArgs>) -> CliResult<WalkConfig> {
    let (phi, eps, max_steps) = match args {
        Some(a) => (a.phi, a.eps, a.max_steps),
        None => (DEFAULT_PHI, DEFAULT_EPSILON, None),
    };
    let cfg = WalkConfig::new(phi, eps)?;
    Ok(match max_steps {
        Some(m) => cfg.with_max_steps(m)?,
        None => cfg,
    })
}

fn base_config(command: &str, path: &Path, loaded: &LoadedPovm, walk: WalkConfig) -> RunConfig {
    RunConfig {
        command: command.into(),
        povm_path: path.display().to_string(),
        labels: loaded.labels.clone(),
        povm: loaded.povm.clone(),
        state: None,
        walk,
        trajectories: DEFAULT_TRAJECTORIES,
        seed: DEFAULT_SEED,
        z_limit: DEFAULT_Z_LIMIT,
        depth: None,
    }
}

fn finish(config: RunConfig, invariants: Vec<InvariantCheck>, statistical_pass: bool) -> ResultBundle {
    let invariants_pass = invariants.iter().all(|c| c.pass || !c.gates());
    let status = if !invariants_pass {
        Status::InvariantFailed
    } else if !statistical_pass {
        Status::StatisticalFailed
    } else {
        Status::Ok
    };
    ResultBundle {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config,
        decomposition: None,
        simulation: None,
        oracle: Vec::new(),
        invariants,
        invariants_pass,
        status,
    }
}

fn povm_checks(povm: &Povm, tol: &Tolerances) -> Vec<InvariantCheck> {
    let completeness = povm
        .elements()
        .iter()
        .copied()
        .sum::<HermitianOp>()
        .max_distance(&HermitianOp::identity());
    let negativity = povm
        .elements()
        .iter()
        .map(|e| -e.min_eigenvalue())
        .fold(f64::NEG_INFINITY, f64::max);
    vec![
        InvariantCheck::at_most("povm_completeness", completeness, tol.completeness),
        InvariantCheck::at_most("povm_negativity", negativity, tol.psd),
    ]
}

/// Checks of the split tree and the per-leaf projective plans.
pub fn decomposition_checks(
    povm: &Povm,
    tree: &LipovmTree,
    plans: &[PpovmPlan],
    tol: &Tolerances,
) -> Vec<InvariantCheck> {
    let leaves = tree.leaves();
    let largest = leaves.iter().map(|l| l.povm.len()).max().unwrap_or(0);
    let probability_sum: f64 = leaves.iter().map(|l| l.probability).sum();
    let dependent = leaves
        .iter()
        .filter(|l| find_dependence(l.povm, tol).is_some())
        .count();

    let mut recombined = vec![HermitianOp::zero(); povm.label_span()];
    for leaf in &leaves {
        for (e, &label) in leaf.povm.elements().iter().zip(leaf.povm.labels()) {
            recombined[label] = recombined[label] + e.scale(leaf.probability);
        }
    }
    let mut split_residual: f64 = 0.0;
    for (e, &label) in povm.elements().iter().zip(povm.labels()) {
        split_residual = split_residual.max(recombined[label].max_distance(e));
    }

    let plan_residual = plans
        .iter()
        .map(PpovmPlan::reconstruction_residual)
        .fold(0.0, f64::max);
    let column_residual = plans
        .iter()
        .map(PpovmPlan::column_residual)
        .fold(0.0, f64::max);
    let plan_completeness = plans
        .iter()
        .map(|p| {
            p.ppovm
                .elements()
                .iter()
                .copied()
                .sum::<HermitianOp>()
                .max_distance(&HermitianOp::identity())
        })
        .fold(0.0, f64::max);
    // A plan with one nonzero element is the trivial measurement and never walks.
    let rank_excess = plans
        .iter()
        .filter(|p| p.active().len() > 1)
        .flat_map(|p| p.ppovm.elements().iter())
        .filter(|e| e.trace() > tol.zero_weight)
        .map(|e| {
            let b = pauli_decompose(e);
            (b.bloch_length() - 1.0).abs()
        })
        .fold(0.0, f64::max);

    vec![
        InvariantCheck::at_most("leaf_max_outcomes", largest as f64, 4.0),
        InvariantCheck::at_most("leaf_dependent_count", dependent as f64, 0.0),
        InvariantCheck::at_most(
            "leaf_probability_sum",
            (probability_sum - 1.0).abs(),
            IDENTITY_LIMIT,
        ),
        InvariantCheck::at_most("split_reconstruction", split_residual, IDENTITY_LIMIT),
        InvariantCheck::at_most("plan_reconstruction", plan_residual, IDENTITY_LIMIT),
        InvariantCheck::at_most("plan_conditional_columns", column_residual, IDENTITY_LIMIT),
        InvariantCheck::at_most("plan_completeness", plan_completeness, IDENTITY_LIMIT),
        InvariantCheck::at_most("plan_rank_one", rank_excess, 1e-9),
    ]
}

fn decomposition(tree: &LipovmTree, plans: &[PpovmPlan]) -> Decomposition {
    Decomposition {
        tree: tree.clone(),
        leaves: tree
            .leaves()
            .iter()
            .map(|l| LeafSummary {
                id: l.id,
                probability: l.probability,
                labels: l.povm.labels().to_vec(),
            })
            .collect(),
        plans: plans.to_vec(),
    }
}

fn invariant_lines(out: &mut String, checks: &[InvariantCheck]) {
    let failed: Vec<&InvariantCheck> = checks.iter().filter(|c| !c.pass).collect();
    if failed.iter().all(|c| !c.gates()) {
        let gating = checks.iter().filter(|c| c.gates()).count();
        let _ = writeln!(out, "invariants: {gating} checks pass");
    }
    for c in failed {
        let value = c.value.map_or("non-finite".to_string(), |v| format!("{v:e}"));
        let kind = if c.gates() { "invariant FAILED" } else { "note" };
        let _ = writeln!(out, "{kind}: {} = {} (limit {:e})", c.name, value, c.limit);
    }
}

pub fn cmd_validate(args: &PovmArgs) -> CliResult<CommandOutput> {
    let tol = Tolerances::default();
    let loaded = load_povm_file(&args.povm, &tol)?;
    let config = base_config("validate", &args.povm, &loaded, walk_config(None)?);
    let checks = povm_checks(&loaded.povm, &tol);
    let dependent = find_dependence(&loaded.povm, &tol).is_some();

    let mut s = String::new();
    let _ = writeln!(s, "{}: valid POVM with {} elements", args.povm.display(), loaded.povm.len());
    let _ = writeln!(s, "{:>10} {:>10} {:>30}", "label", "trace", "bloch");
    for (e, label) in loaded.povm.elements().iter().zip(&loaded.labels) {
        let b = pauli_decompose(e);
        let _ = writeln!(
            s,
            "{:>10} {:>10.6} {:>30}",
            label,
            e.trace(),
            format!("({:.4}, {:.4}, {:.4})", b.v[0], b.v[1], b.v[2])
        );
    }
    let _ = writeln!(
        s,
        "elements are linearly {}",
        if dependent { "dependent" } else { "independent" }
    );
    invariant_lines(&mut s, &checks);
    Ok(CommandOutput {
        bundle: finish(config, checks, true),
        summary: s,
        artifacts: Vec::new(),
    })
}

pub fn cmd_decompose(args: &PovmArgs) -> CliResult<CommandOutput> {
    let tol = Tolerances::default();
    let loaded = load_povm_file(&args.povm, &tol)?;
    let config = base_config("decompose", &args.povm, &loaded, walk_config(None)?);
    let (tree, plans) = prepare(&loaded.povm, &tol)?;
    let mut checks = povm_checks(&loaded.povm, &tol);
    checks.extend(decomposition_checks(&loaded.povm, &tree, &plans, &tol));

    let mut s = String::new();
    let _ = writeln!(
        s,
        "{}: {} leaves, tree depth {}",
        args.povm.display(),
        tree.leaf_count(),
        tree.depth()
    );
    let _ = writeln!(s, "{:>6} {:>12}  labels", "leaf", "probability");
    for (leaf, plan) in tree.leaves().iter().zip(&plans) {
        let names: Vec<&str> = leaf
            .povm
            .labels()
            .iter()
            .map(|&l| loaded.labels[l].as_str())
            .collect();
        let _ = writeln!(
            s,
            "{:>6} {:>12.6}  {} ({} walk vertices)",
            leaf.id,
            leaf.probability,
            names.join(", "),
            plan.active().len()
        );
    }
    invariant_lines(&mut s, &checks);
    let mut bundle = finish(config, checks, true);
    bundle.decomposition = Some(decomposition(&tree, &plans));
    Ok(CommandOutput {
        bundle,
        summary: s,
        artifacts: Vec::new(),
    })
}

fn simulation_checks(run: &PipelineRun) -> Vec<InvariantCheck> {
    let d = &run.destructive;
    let reference_sum: f64 = run.statistics.reference.iter().sum();
    vec![
        InvariantCheck::at_most("destructive_lower_left_nonzero", d.lower_left_nonzero as f64, 0.0),
        InvariantCheck::at_most("destructive_ratio_residual", d.max_ratio_residual, 1e-9),
        InvariantCheck::at_most("destructive_ratio_undefined", d.ratio_undefined as f64, 0.0),
        InvariantCheck::at_most(
            "destructive_infidelity_violations",
            d.infidelity_violations as f64,
            0.0,
        )
        .advisory(),
        InvariantCheck::at_most(
            "destructive_state_bound_violations",
            d.state_bound_violations as f64,
            0.0,
        ),
        InvariantCheck::at_most("born_reference_sum", (reference_sum - 1.0).abs(), IDENTITY_LIMIT),
    ]
}

fn trajectories_csv(run: &PipelineRun) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Usage(format!("csv: {e}"));
    w.write_record(["trajectory", "leaf", "steps", "vertex", "output", "final_infidelity"])
        .map_err(csv_err)?;
    let opt = |v: Option<usize>| v.map_or(String::new(), |v| v.to_string());
    for r in &run.trajectories {
        w.write_record([
            r.trajectory.to_string(),
            r.leaf.to_string(),
            r.steps.to_string(),
            opt(r.vertex),
            opt(r.output),
            r.final_infidelity.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Usage(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<CommandOutput> {
    let tol = Tolerances::default();
    let loaded = load_povm_file(&args.target.povm, &tol)?;
    let cfg = walk_config(Some(&args.walk))?;
    if args.traj == 0 {
        return Err(CliError::Usage("--traj must be at least 1".into()));
    }
    if !(args.z_limit > 0.0) {
        return Err(CliError::Usage("--z-limit must be positive".into()));
    }
    let spec = load_state(&args.walk.state)?;
    let sampler = sampler_for(&spec, &tol)?;

    let run = run_pipeline(&loaded.povm, &sampler, &cfg, args.seed, args.traj)?;
    let verdict = compare_statistics(&run.statistics, args.z_limit);

    let mut checks = povm_checks(&loaded.povm, &tol);
    checks.extend(decomposition_checks(&loaded.povm, &run.tree, &run.plans, &tol));
    checks.extend(simulation_checks(&run));

    let mut config = base_config("simulate", &args.target.povm, &loaded, cfg);
    config.state = Some(spec);
    config.trajectories = args.traj;
    config.seed = args.seed;
    config.z_limit = args.z_limit;

    let stats = &run.statistics;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "simulate {}: {} trajectories, phi {}, eps {}, seed {}",
        args.target.povm.display(),
        args.traj,
        cfg.phi,
        cfg.epsilon_vertex,
        args.seed
    );
    let _ = writeln!(s, "{:>10} {:>8} {:>10} {:>10} {:>8}", "label", "count", "frequency", "born", "z");
    for l in 0..stats.counts.len() {
        let _ = writeln!(
            s,
            "{:>10} {:>8} {:>10.5} {:>10.5} {:>8.3}",
            loaded.labels[l], stats.counts[l], stats.frequencies[l], stats.reference[l], verdict.z_scores[l]
        );
    }
    let _ = writeln!(
        s,
        "mean steps {:.1}, max steps {}, non-converged {}, mean fidelity to |0> {:.6}",
        stats.mean_steps, stats.max_steps, stats.non_converged, stats.mean_fidelity
    );
    let _ = writeln!(
        s,
        "statistics: {} (|z| <= {})",
        if verdict.pass { "pass" } else { "FAIL" },
        args.z_limit
    );
    invariant_lines(&mut s, &checks);

    let mut artifacts = Vec::new();
    if args.csv {
        artifacts.push(Artifact {
            name: "trajectories.csv".into(),
            contents: trajectories_csv(&run)?,
        });
    }
    let mut bundle = finish(config, checks, verdict.pass);
    bundle.decomposition = Some(decomposition(&run.tree, &run.plans));
    bundle.simulation = Some(Simulation {
        statistics: run.statistics.clone(),
        check: StatisticalCheck::from(&verdict),
        destructive: run.destructive,
        non_converged_fraction: stats.non_converged as f64 / args.traj as f64,
    });
    Ok(CommandOutput {
        bundle,
        summary: s,
        artifacts,
    })
}

/// Depths visited by the oracle command.
pub fn oracle_depths(depth: usize, stride: usize) -> Vec<usize> {
    let mut d: Vec<usize> = (0..=depth).step_by(stride.max(1)).collect();
    if d.last() != Some(&depth) {
        d.push(depth);
    }
    d
}

/// Exact output distribution at `depth`, mixing leaves and input kets.
pub fn oracle_at_depth(
    povm: &Povm,
    tree: &LipovmTree,
    plans: &[PpovmPlan],
    sampler: &StateSampler,
    cfg: &WalkConfig,
    depth: usize,
) -> CliResult<OracleDepth> {
    let kets = match sampler {
        StateSampler::Pure { ket } => vec![(1.0, *ket)],
        StateSampler::Ensemble { probabilities, kets } => probabilities
            .iter()
            .copied()
            .zip(kets.iter().copied())
            .filter(|(p, _)| *p > 0.0)
            .collect(),
        StateSampler::Haar => {
            return Err(CliError::Usage(
                "the oracle needs a pure state or a density matrix, not haar".into(),
            ))
        }
    };
    let span = povm.label_span();
    let mut components = Vec::new();
    let mut output_masses = vec![0.0; span];
    let mut total_probability = 0.0;
    let mut absorbed_mass = 0.0;
    for (leaf, plan) in tree.leaves().iter().zip(plans) {
        for (p, ket) in &kets {
            let weight = leaf.probability * p;
            let report = oracle_enumerate(plan, ket, cfg, depth, false)?;
            for (l, m) in report.output_masses.iter().enumerate() {
                output_masses[l] += weight * m;
            }
            total_probability += weight * report.total_probability;
            absorbed_mass += weight * report.absorbed_mass;
            components.push(OracleComponent {
                leaf: leaf.id,
                weight,
                report,
            });
        }
    }
    let born = born_probabilities(povm, &sampler.density(), &cfg.tolerances)?;
    let mut reference = vec![0.0; span];
    for (b, &l) in born.iter().zip(povm.labels()) {
        reference[l] += b;
    }
    let total_variation = 0.5
        * output_masses
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    Ok(OracleDepth {
        depth,
        total_probability,
        absorbed_mass,
        output_masses,
        reference,
        total_variation,
        components,
    })
}

pub fn cmd_oracle(args: &OracleArgs) -> CliResult<CommandOutput> {
    let tol = Tolerances::default();
    let loaded = load_povm_file(&args.target.povm, &tol)?;
    let cfg = walk_config(Some(&args.walk))?;
    let spec = load_state(&args.walk.state)?;
    if spec == StateSpec::Haar {
        return Err(CliError::Usage(
            "the oracle needs a pure state or a density matrix, not haar".into(),
        ));
    }
    let sampler = sampler_for(&spec, &tol)?;
    let (tree, plans) = prepare(&loaded.povm, &tol)?;

    let mut results = Vec::new();
    for d in oracle_depths(args.depth, args.stride) {
        results.push(oracle_at_depth(&loaded.povm, &tree, &plans, &sampler, &cfg, d)?);
    }

    let mut checks = povm_checks(&loaded.povm, &tol);
    checks.extend(decomposition_checks(&loaded.povm, &tree, &plans, &tol));
    for r in &results {
        let crosscheck = r
            .components
            .iter()
            .map(|c| c.report.max_crosscheck_residual)
            .fold(0.0, f64::max);
        checks.push(InvariantCheck::at_most(
            format!("oracle_total_probability_depth_{}", r.depth),
            (r.total_probability - 1.0).abs(),
            ORACLE_LIMIT,
        ));
        checks.push(InvariantCheck::at_most(
            format!("oracle_crosscheck_depth_{}", r.depth),
            crosscheck,
            ORACLE_LIMIT,
        ));
    }

    let mut config = base_config("oracle", &args.target.povm, &loaded, cfg);
    config.state = Some(spec);
    config.depth = Some(args.depth);

    let mut s = String::new();
    let _ = writeln!(
        s,
        "oracle {}: phi {}, eps {}",
        args.target.povm.display(),
        cfg.phi,
        cfg.epsilon_vertex
    );
    let _ = writeln!(
        s,
        "{:>6} {:>10} {:>20} {:>12} {:>14}",
        "depth", "strings", "total probability", "absorbed", "TV to Born"
    );
    let mut csv = String::from("depth,strings,total_probability,absorbed_mass,total_variation\n");
    for r in &results {
        let strings: usize = r.components.iter().map(|c| c.report.string_count).sum();
        let _ = writeln!(
            s,
            "{:>6} {:>10} {:>20.15} {:>12.6} {:>14.6e}",
            r.depth, strings, r.total_probability, r.absorbed_mass, r.total_variation
        );
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            r.depth, strings, r.total_probability, r.absorbed_mass, r.total_variation
        );
    }
    invariant_lines(&mut s, &checks);

    let mut bundle = finish(config, checks, true);
    bundle.decomposition = Some(decomposition(&tree, &plans));
    bundle.oracle = results;
    Ok(CommandOutput {
        bundle,
        summary: s,
        artifacts: vec![Artifact {
            name: "tv_by_depth.csv".into(),
            contents: csv,
        }],
    })
}

/// Writes `bundle.json` and the artifacts into `dir`.
pub fn write_outputs(dir: &Path, out: &CommandOutput) -> CliResult<()> {
    let io_err = |path: &Path| {
        let path = path.display().to_string();
        move |source| CliError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let bundle = dir.join("bundle.json");
    std::fs::write(&bundle, out.bundle.to_json()).map_err(io_err(&bundle))?;
    for a in &out.artifacts {
        let path = dir.join(&a.name);
        std::fs::write(&path, &a.contents).map_err(io_err(&path))?;
    }
    Ok(())
}
