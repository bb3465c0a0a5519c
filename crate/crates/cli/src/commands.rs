//! The five experiment commands.

use std::path::Path;

use anyhow::{bail, Context};

use lsmc::{
    bsbu_solve, forward_simulate, fsbu_solve, oracle, repeat_experiment, sample_post_actions,
    BasisChoice, CrRule, Engine, ExperimentResult, RandomStream, RunResult, ShapeConstraint,
    SolverConfig, TruncatedDomain,
};

use crate::config::{EngineName, ExperimentConfig, RegressionName};
use crate::output::{num, Artifacts, Csv};

fn domain(config: &ExperimentConfig) -> anyhow::Result<TruncatedDomain> {
    TruncatedDomain::interval(0.0, config.solver.truncation_bound)
        .map_err(|e| anyhow::anyhow!("truncation domain: {e}"))
}

fn basis_cell(basis: &BasisChoice) -> String {
    match basis {
        BasisChoice::Fixed(j) => j.to_string(),
        BasisChoice::Select { .. } => "selected".to_string(),
    }
}

fn engine_cell(engine: EngineName) -> &'static str {
    match engine {
        EngineName::Bsbu => "bsbu",
        EngineName::FsbuCr0 => "fsbu-cr0",
        EngineName::FsbuCr1 => "fsbu-cr1",
        EngineName::FsbuCr2 => "fsbu-cr2",
    }
}

fn regression_cell(r: RegressionName) -> &'static str {
    match r {
        RegressionName::Spse => "spse",
        RegressionName::Rse => "rse",
    }
}

fn diagnostics_csv(runs: &[RunResult]) -> String {
    let mut csv = Csv::new("repeat,step,slice,samples,order,ssr,kkt_residual,degenerate");
    for (r, run) in runs.iter().enumerate() {
        for d in &run.diagnostics {
            csv.row(&[
                r.to_string(),
                d.step.to_string(),
                d.slice.to_string(),
                d.sample_size.to_string(),
                d.order_used.to_string(),
                num(d.ssr),
                num(d.kkt_residual),
                (d.degenerate as u8).to_string(),
            ]);
        }
    }
    csv.finish()
}

/// Full dump of the fitted continuation coefficients of every run.
fn coefficients_csv(runs: &[RunResult]) -> String {
    let mut csv = Csv::new("repeat,step,slice,index,coefficient");
    for (r, run) in runs.iter().enumerate() {
        for t in 0..run.estimate.horizon() {
            for (slice, fit) in run.estimate.slices(t) {
                for (i, c) in fit.coefficients().iter().enumerate() {
                    csv.row(&[
                        r.to_string(),
                        t.to_string(),
                        slice.to_string(),
                        i.to_string(),
                        num(*c),
                    ]);
                }
            }
        }
    }
    csv.finish()
}

pub fn price(config: &ExperimentConfig, out: &Path) -> anyhow::Result<()> {
    let contract = config.contract.build()?;
    let dom = domain(config)?;
    let solver = config.solver_config()?;
    let engine: Engine = config.engine.into();
    let result = repeat_experiment(&contract, &dom, &solver, engine)
        .context("running the pricing experiment")?;

    let mut artifacts = Artifacts::new();
    let mut summary = Csv::new("engine,regression,paths_per_step,basis,repeats,seed,mean,sd,min,max");
    summary.row(&[
        engine_cell(config.engine).to_string(),
        regression_cell(config.regression).to_string(),
        solver.paths_per_step.to_string(),
        basis_cell(&solver.basis),
        solver.repeats.to_string(),
        solver.seed.to_string(),
        num(result.stats.mean),
        num(result.stats.sd),
        num(result.stats.min),
        num(result.stats.max),
    ]);
    artifacts.add("summary.csv", summary.finish());

    let mut repeats = Csv::new("repeat,v0");
    for (r, v) in result.stats.values.iter().enumerate() {
        repeats.row(&[r.to_string(), num(*v)]);
    }
    artifacts.add("repeats.csv", repeats.finish());
    artifacts.add("diagnostics.csv", diagnostics_csv(&result.runs));
    artifacts.add("coefficients.csv", coefficients_csv(&result.runs));
    artifacts.add_manifest("price", &config.canonical(), solver.seed, solver.repeats);
    artifacts.write_all(out)?;

    println!(
        "price: mean {:.6}, sd {:.6} over {} repeats -> {}",
        result.stats.mean,
        result.stats.sd,
        solver.repeats,
        out.display()
    );
    Ok(())
}

pub fn compare_regression(config: &ExperimentConfig, out: &Path) -> anyhow::Result<()> {
    let contract = config.contract.build()?;
    let dom = domain(config)?;
    let base = config.solver_config()?;
    let shaped: ShapeConstraint = config.solver.constraint.into();
    if shaped == ShapeConstraint::None {
        bail!("compare-regression needs solver.constraint other than \"none\"");
    }
    let settings: Vec<(usize, usize)> = if config.sweep.settings.is_empty() {
        vec![(config.solver.paths_per_step, config.solver.basis_order)]
    } else {
        config.sweep.settings.clone()
    };

    let mut summary = Csv::new("setting,paths_per_step,basis_order,spse_mean,spse_sd,rse_mean,rse_sd");
    let mut repeats = Csv::new("setting,paths_per_step,basis_order,regression,repeat,v0");
    let mut all_ok = true;
    for (idx, &(m, j)) in settings.iter().enumerate() {
        let run = |constraint: ShapeConstraint| -> anyhow::Result<ExperimentResult> {
            let solver = SolverConfig {
                paths_per_step: m,
                basis: BasisChoice::Fixed(j),
                constraint,
                ..base.clone()
            };
            solver.validate().map_err(|e| anyhow::anyhow!("setting {idx}: {e}"))?;
            repeat_experiment(&contract, &dom, &solver, Engine::Bsbu)
                .with_context(|| format!("setting {idx} ({m} paths, order {j})"))
        };
        let spse = run(shaped)?;
        let rse = run(ShapeConstraint::None)?;
        summary.row(&[
            idx.to_string(),
            m.to_string(),
            j.to_string(),
            num(spse.stats.mean),
            num(spse.stats.sd),
            num(rse.stats.mean),
            num(rse.stats.sd),
        ]);
        for (name, result) in [("spse", &spse), ("rse", &rse)] {
            for (r, v) in result.stats.values.iter().enumerate() {
                repeats.row(&[
                    idx.to_string(),
                    m.to_string(),
                    j.to_string(),
                    name.to_string(),
                    r.to_string(),
                    num(*v),
                ]);
            }
        }
        if spse.stats.sd >= rse.stats.sd {
            all_ok = false;
        }
        println!(
            "setting {idx} (M = {m}, J = {j}): spse sd {:.5} vs rse sd {:.5}",
            spse.stats.sd, rse.stats.sd
        );
    }

    let mut artifacts = Artifacts::new();
    artifacts.add("summary.csv", summary.finish());
    artifacts.add("repeats.csv", repeats.finish());
    artifacts.add_manifest(
        "compare-regression",
        &config.canonical(),
        config.solver.seed,
        config.solver.repeats,
    );
    artifacts.write_all(out)?;
    if !all_ok {
        println!("note: the shape constraint did not reduce the spread in every setting");
    }
    Ok(())
}

pub fn compare_simulation(config: &ExperimentConfig, out: &Path) -> anyhow::Result<()> {
    let contract = config.contract.build()?;
    let dom = domain(config)?;
    let r_bound = config.solver.truncation_bound;
    let m = config.solver.paths_per_step;
    let horizon = contract.horizon;
    let stream = RandomStream::new(config.solver.seed);
    let bins = 50usize;

    let mut account = Csv::new("sampler,step,bin,lo,hi,count");
    let mut label = Csv::new("sampler,step,label,count");
    let samplers: [(&str, Option<CrRule>); 3] =
        [("bsbu", None), ("fsbu-cr1", Some(CrRule::Cr1)), ("fsbu-cr2", Some(CrRule::Cr2))];
    for (s_idx, &(name, rule)) in samplers.iter().enumerate() {
        for t in 0..horizon {
            let tag = (s_idx * horizon + t) as u64;
            let post = match rule {
                None => sample_post_actions(t, r_bound, m, stream.derive(tag))
                    .map_err(|e| anyhow::anyhow!("{e}"))?,
                Some(rule) => {
                    forward_simulate(&contract, &dom, rule, t, m, stream.derive(tag))
                        .map_err(|e| anyhow::anyhow!("{e}"))?
                        .post_actions
                }
            };
            let mut zero_count = 0usize;
            let mut counts = vec![0usize; bins];
            let mut label_counts = vec![0usize; t + 1];
            for k in &post {
                let (k1, k2) = k.scalar_parts().map_err(|e| anyhow::anyhow!("{e}"))?;
                if k1 == 0.0 {
                    zero_count += 1;
                } else {
                    let bin = (((k1 / r_bound) * bins as f64) as usize).min(bins - 1);
                    counts[bin] += 1;
                }
                label_counts[k2 as usize] += 1;
            }
            account.row(&[
                name.to_string(),
                t.to_string(),
                "-1".to_string(),
                num(0.0),
                num(0.0),
                zero_count.to_string(),
            ]);
            for (b, &count) in counts.iter().enumerate() {
                account.row(&[
                    name.to_string(),
                    t.to_string(),
                    b.to_string(),
                    num(r_bound * b as f64 / bins as f64),
                    num(r_bound * (b + 1) as f64 / bins as f64),
                    count.to_string(),
                ]);
            }
            for (l, &count) in label_counts.iter().enumerate() {
                label.row(&[name.to_string(), t.to_string(), l.to_string(), count.to_string()]);
            }
        }
    }

    let mut artifacts = Artifacts::new();
    artifacts.add("hist_account.csv", account.finish());
    artifacts.add("hist_label.csv", label.finish());
    artifacts.add_manifest(
        "compare-simulation",
        &config.canonical(),
        config.solver.seed,
        config.solver.repeats,
    );
    artifacts.write_all(out)?;
    println!("compare-simulation: histograms for {m} draws per step -> {}", out.display());
    Ok(())
}

pub fn convergence_sweep(config: &ExperimentConfig, out: &Path) -> anyhow::Result<()> {
    let contract = config.contract.build()?;
    let dom = domain(config)?;
    let base = config.solver_config()?;
    let engine: Engine = config.engine.into();
    let paths: Vec<usize> = if config.sweep.paths.is_empty() {
        vec![100_000, 200_000, 400_000]
    } else {
        config.sweep.paths.clone()
    };

    let mut summary = Csv::new("paths_per_step,basis,repeats,mean,sd,min,max");
    let mut repeats = Csv::new("paths_per_step,repeat,v0");
    let mut sds = Vec::new();
    for &m in &paths {
        let solver = SolverConfig { paths_per_step: m, ..base.clone() };
        solver.validate().map_err(|e| anyhow::anyhow!("sweep at {m} paths: {e}"))?;
        let result = repeat_experiment(&contract, &dom, &solver, engine)
            .with_context(|| format!("sweep at {m} paths"))?;
        summary.row(&[
            m.to_string(),
            basis_cell(&solver.basis),
            solver.repeats.to_string(),
            num(result.stats.mean),
            num(result.stats.sd),
            num(result.stats.min),
            num(result.stats.max),
        ]);
        for (r, v) in result.stats.values.iter().enumerate() {
            repeats.row(&[m.to_string(), r.to_string(), num(*v)]);
        }
        println!("M = {m}: mean {:.6}, sd {:.6}", result.stats.mean, result.stats.sd);
        sds.push(result.stats.sd);
    }

    let mut artifacts = Artifacts::new();
    artifacts.add("summary.csv", summary.finish());
    artifacts.add("repeats.csv", repeats.finish());
    artifacts.add_manifest(
        "convergence-sweep",
        &config.canonical(),
        config.solver.seed,
        config.solver.repeats,
    );
    artifacts.write_all(out)?;
    if sds.windows(2).any(|w| w[1] >= w[0]) {
        println!("note: the spread did not decrease monotonically across the sweep");
    }
    Ok(())
}

pub fn oracle_check(config: &ExperimentConfig, out: &Path) -> anyhow::Result<()> {
    let full = config.contract.build()?;
    let contract = match config.oracle.horizon {
        0 => full,
        h if h <= full.horizon => full.shortened(h),
        h => bail!("oracle.horizon {h} exceeds the contract horizon {}", full.horizon),
    };
    let dom = domain(config)?;
    let solver = config.solver_config()?;

    let grid = oracle::GridSpec::uniform(
        &dom,
        config.oracle.grid_points,
        &contract.innovation_spec(),
        config.oracle.quadrature_order,
    )
    .map_err(|e| anyhow::anyhow!("grid: {e}"))?;
    let solution = oracle::grid_dp_solve(&contract, &dom, &grid)
        .map_err(|e| anyhow::anyhow!("grid recursion: {e}"))?;
    let grid_value = solution.initial_value(&contract).map_err(|e| anyhow::anyhow!("{e}"))?;

    let engine: Engine = config.engine.into();
    let run = match engine {
        Engine::Bsbu => bsbu_solve(&contract, &dom, &solver),
        Engine::Fsbu(rule) => fsbu_solve(&contract, &dom, &solver, rule),
    }
    .context("running the engine for the oracle comparison")?;

    let cmp = oracle::compare_estimates(run.v0, grid_value);
    let within = cmp.relative <= config.oracle.max_relative_error;

    let mut summary = Csv::new(
        "engine,estimate,grid_value,absolute_error,relative_error,tolerance,within_tolerance",
    );
    summary.row(&[
        engine_cell(config.engine).to_string(),
        num(run.v0),
        num(grid_value),
        num(cmp.absolute),
        num(cmp.relative),
        num(config.oracle.max_relative_error),
        (within as u8).to_string(),
    ]);

    let mut table = Csv::new("step,label,account,value");
    for t in 0..=solution.horizon() {
        for label in solution.labels() {
            let values = solution.table(t, label).expect("tabulated slice");
            for (g, &w) in solution.account_grid().iter().enumerate() {
                table.row(&[t.to_string(), label.to_string(), num(w), num(values[g])]);
            }
        }
    }

    let mut artifacts = Artifacts::new();
    artifacts.add("summary.csv", summary.finish());
    artifacts.add("value_table.csv", table.finish());
    artifacts.add_manifest(
        "oracle-check",
        &config.canonical(),
        config.solver.seed,
        config.solver.repeats,
    );
    artifacts.write_all(out)?;

    println!(
        "oracle-check: engine {:.6} vs grid {:.6} (relative error {:.3e}, tolerance {:.1e})",
        run.v0, grid_value, cmp.relative, config.oracle.max_relative_error
    );
    if !within {
        bail!(
            "relative error {:.3e} above the configured tolerance {:.1e}",
            cmp.relative,
            config.oracle.max_relative_error
        );
    }
    Ok(())
}
