//! Acceptance criteria, one PASS/FAIL line each. Runs the full-scale example
//! configs from `configs/`.

use std::path::PathBuf;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rpia_core::assembly::{
    assemble_collocation, augment_curve, augment_surface, difference_matrix, make_partition, BlockPartition,
    CollocationMatrix,
};
use rpia_core::basis::{build_knots, chord_length_params, ParamSequence};
use rpia_core::config::{ExperimentConfig, LambdaMode};
use rpia_core::curve::{self, initial_control_points, StoppingRule};
use rpia_core::datasets::{add_noise, rose_curve, NoiseSpec};
use rpia_core::exec::Execution;
use rpia_core::experiment::{build_problem, run_experiment, FitReport, SweepKind};
use rpia_core::oracle::{
    contraction_radius, contraction_radius_curve, contraction_radius_surface, expectation_map_curve,
    expectation_map_surface, solve_curve_direct, solve_surface_direct,
};
use rpia_core::regparam::spectral_decay_from_eigenvalues;
use rpia_core::surface::{self, SurfacePartitions};
use rpia_core::{FitError, PointGrid};

type Outcome = Result<String, String>;

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&configs().join(name)).expect("config loads")
}

fn run(cfg: &ExperimentConfig) -> FitReport {
    run_experiment(cfg, &Execution::Parallel).expect("experiment runs").report
}

fn with_lambda(mut cfg: ExperimentConfig, lambda: LambdaMode) -> ExperimentConfig {
    cfg.lambda = lambda;
    cfg
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn c1_curve_expectation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = CollocationMatrix::from_matrix(random(&mut rng, 4, 4));
    let gamma = difference_matrix(4, 1.0).unwrap();
    let q = random(&mut rng, 4, 2);
    let sys = augment_curve(&a, &gamma, &q, 0.5).unwrap();
    let part = make_partition(sys.a_hat(), 2).unwrap();
    let p_star = solve_curve_direct(&sys).unwrap().control_points;
    let (mut oracle_gap, mut step_gap) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let z = random(&mut rng, 8, 2);
        let map = expectation_map_curve(&sys, &part, &z).unwrap();
        oracle_gap = oracle_gap.max((map.enumerated - &map.closed_form).amax());

        // second route: average the solver's own steps over every block
        let p = random(&mut rng, 4, 2);
        let z = sys.a_hat() * (&p - &p_star);
        let mut mean = DMatrix::zeros(8, 2);
        for t in 0..part.len() {
            let mut state = curve::init_state(&sys, &p, 0).unwrap();
            state.apply_block(&sys, &part, t);
            mean += sys.a_hat() * (state.control_points() - &p_star) * part.probabilities()[t];
        }
        let closed = &z - sys.a_hat() * sys.a_hat().tr_mul(&z) / sys.a_hat().norm_squared();
        step_gap = step_gap.max((mean - closed).amax());
    }
    let gap = oracle_gap.max(step_gap);
    check(gap <= 1e-12, format!("max abs gap {gap:.2e} (oracle {oracle_gap:.1e}, solver steps {step_gap:.1e})"))
}

fn c2_surface_expectation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = CollocationMatrix::from_matrix(random(&mut rng, 3, 3));
    let b = CollocationMatrix::from_matrix(random(&mut rng, 2, 3));
    let l = difference_matrix(3, 1.0).unwrap();
    let q = PointGrid::new(vec![random(&mut rng, 3, 2)]).unwrap();
    let sys = augment_surface(&a, &b, &l, &l, &q, 0.3).unwrap();
    let (rows, cols) = (make_partition(sys.a_hat(), 2).unwrap(), make_partition(sys.b_hat(), 2).unwrap());
    let parts = SurfacePartitions {
        rows: &rows,
        cols: &cols,
    };
    let p_star = solve_surface_direct(&sys).unwrap().control_points;
    let (ah, bh) = (sys.a_hat().clone(), sys.b_hat().clone());
    let w = ah.norm_squared() * bh.norm_squared();
    let (mut oracle_gap, mut step_gap) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let z = random(&mut rng, 6, 5);
        let map = expectation_map_surface(&sys, parts, &z).unwrap();
        oracle_gap = oracle_gap.max((map.enumerated - &map.closed_form).amax());

        let p = PointGrid::new(vec![random(&mut rng, 3, 3)]).unwrap();
        let z = p.sub(&p_star).sandwich(&ah, &bh).slices()[0].clone();
        let mut mean = DMatrix::zeros(6, 5);
        for t in 0..rows.len() {
            for s in 0..cols.len() {
                let mut state = surface::init_state(&sys, &p, 0).unwrap();
                state.apply_blocks(&sys, parts, t, s);
                let e = state.control_grid().sub(&p_star).sandwich(&ah, &bh);
                mean += &e.slices()[0] * (rows.probabilities()[t] * cols.probabilities()[s]);
            }
        }
        let closed = &z - &ah * ah.tr_mul(&z) * &bh * bh.transpose() / w;
        step_gap = step_gap.max((mean - closed).amax());
    }
    let gap = oracle_gap.max(step_gap);
    check(gap <= 1e-12, format!("max abs gap {gap:.2e} (oracle {oracle_gap:.1e}, solver steps {step_gap:.1e})"))
}

fn c3_contraction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let a = CollocationMatrix::from_matrix(random(&mut rng, 9, 6));
        let b = CollocationMatrix::from_matrix(random(&mut rng, 7, 5));
        let q = random(&mut rng, 9, 2);
        let curve = augment_curve(&a, &difference_matrix(6, 2.0).unwrap(), &q, 0.1).unwrap();
        worst = worst.max(contraction_radius_curve(&curve));
        let grid = PointGrid::new(vec![random(&mut rng, 9, 7)]).unwrap();
        let (lu, lv) = (difference_matrix(6, 2.0).unwrap(), difference_matrix(5, 2.0).unwrap());
        let surf = augment_surface(&a, &b, &lu, &lv, &grid, 0.1).unwrap();
        worst = worst.max(contraction_radius_surface(&surf).unwrap());
    }
    let mut degenerate = random(&mut rng, 8, 4);
    degenerate.column_mut(2).fill(0.0);
    let rho = contraction_radius(&degenerate);
    let detected = matches!(make_partition(&degenerate, 1), Err(FitError::ZeroColumnBlock(_)));
    check(
        worst < 1.0 && (rho - 1.0).abs() < 1e-12 && detected,
        format!("max radius {worst:.6} on full-rank systems; zeroed block radius {rho:.12}, rejected by partition: {detected}"),
    )
}

fn c4_oracle_convergence() -> Outcome {
    let start = Instant::now();
    let q = rose_curve(200).unwrap().points;
    let params = chord_length_params(&q).unwrap();
    let a = assemble_collocation(&build_knots(&params, 40).unwrap(), &params).unwrap();
    let sys = augment_curve(&a, &difference_matrix(41, 1600.0).unwrap(), &q, 1e-6).unwrap();
    let part: BlockPartition = make_partition(sys.a_hat(), 5).unwrap();
    let p_star = solve_curve_direct(&sys).unwrap().control_points;
    let p0 = initial_control_points(&q, 40).unwrap();
    let cap = 20_000;
    let res = curve::run(&sys, &part, &p0, StoppingRule::fixed(cap), 0).unwrap();
    let target = a.matrix() * &p_star;
    let err = (a.matrix() * &res.control_points - &target).norm() / target.norm();
    let secs = start.elapsed().as_secs_f64();
    check(
        err < 1e-4 && secs < 10.0,
        format!("relative gap {err:.2e} after {} of {cap} iterations, {secs:.2}s", res.iterations),
    )
}

fn fixed_vs_unregularized(name: &str, band: (f64, f64), band0: (f64, f64)) -> (Outcome, FitReport, FitReport) {
    let cfg = load(name);
    let reg = run(&cfg);
    let zero = run(&with_lambda(cfg, LambdaMode::Fixed { value: 0.0 }));
    let (e, e0) = (reg.mean_error, zero.mean_error);
    let ok = (band.0..=band.1).contains(&e) && (band0.0..=band0.1).contains(&e0) && e < e0;
    let lambda = reg.seeds[0].lambda;
    let outcome = check(
        ok,
        format!(
            "λ={lambda:.3e}: E {e:.4} in [{}, {}]; λ=0: E {e0:.4} in [{}, {}]; ({:.1}s + {:.1}s)",
            band.0, band.1, band0.0, band0.1, reg.wall_time_s, zero.wall_time_s
        ),
    );
    (outcome, reg, zero)
}

fn c8_spectral_decay() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, target) in [
        ("example7_1.toml", 4.13),
        ("example7_2.toml", 4.13),
        ("example7_3_a40.toml", 2.09),
    ] {
        let cfg = load(name).resolved().unwrap();
        let fit = build_problem(&cfg).unwrap().spectral_decay(cfg.spectral_head()).unwrap();
        ok &= (fit.alpha - target).abs() <= 0.2;
        lines.push(format!("{name} α={:.4} (target {target}±0.2)", fit.alpha));
    }
    let mut synth = 0.0f64;
    for alpha in [1.0, 2.0, 4.0] {
        let eig: Vec<f64> = (1..=60).map(|k| 3.0 * (k as f64).powf(-alpha)).collect();
        let fit = spectral_decay_from_eigenvalues(eig, 50).unwrap();
        synth = synth.max((fit.alpha - alpha).abs());
    }
    ok &= synth <= 1e-6;
    lines.push(format!("synthetic power laws max gap {synth:.1e}"));
    check(ok, lines.join("; "))
}

fn c9_sweep() -> Outcome {
    let r = run(&load("example7_1_sweep.toml"));
    let rows = r.sweep.as_ref().unwrap();
    let grid: Vec<_> = rows.iter().filter(|r| r.kind == SweepKind::Grid).collect();
    let est = rows.iter().find(|r| r.kind == SweepKind::Estimate).unwrap().lambda;
    let (imin, best) = grid
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.mean_error.total_cmp(&b.1.mean_error))
        .unwrap();
    let decades = (est / best.lambda).log10().abs();
    let seeds = r.seeds.len() as f64;
    // differences within the seed-averaged noise count as flat
    let signs: Vec<i32> = grid
        .windows(2)
        .map(|w| {
            let d = w[1].mean_error - w[0].mean_error;
            let noise = (w[0].std_error + w[1].std_error) / seeds.sqrt();
            if d.abs() <= noise {
                0
            } else {
                d.signum() as i32
            }
        })
        .filter(|&s| s != 0)
        .collect();
    let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
    let shape_ok = changes == 1 && signs.first() == Some(&-1) && signs.last() == Some(&1);
    let interior = imin > 0 && imin + 1 < grid.len();
    check(
        decades <= 1.0 && shape_ok && interior,
        format!(
            "minimizer λ={:.3e} (E {:.4}), estimate λ={est:.3e}, {decades:.2} decades apart; {changes} sign change(s); {:.1}s",
            best.lambda, best.mean_error, r.wall_time_s
        ),
    )
}

fn c10_self_consistent(c5_mean: f64, surface_unreg: f64) -> Outcome {
    let r = run(&load("example7_1_adaptive.toml"));
    let outer = r.seeds.iter().map(|s| s.adaptive.as_ref().unwrap().outer_iterations).max().unwrap();
    let lambdas: Vec<f64> = r.seeds.iter().map(|s| s.lambda).collect();
    let within = lambdas.iter().all(|l| (l / 2.067e-6).log10().abs() <= 3f64.log10());
    let mean_lambda = lambdas.iter().sum::<f64>() / lambdas.len() as f64;
    let curve_ok = outer <= 10 && within && r.mean_error <= c5_mean + 0.01;

    let s = run(&load("example7_3_a100_adaptive.toml"));
    let surface_ok = (0.23..=0.40).contains(&s.mean_error) && s.mean_error < surface_unreg;
    check(
        curve_ok && surface_ok,
        format!(
            "curve: mean λ={mean_lambda:.3e}, ≤{outer} outer, E {:.4} (limit {:.4}); surface a=100: E {:.4} vs unregularized {surface_unreg:.4}",
            r.mean_error,
            c5_mean + 0.01,
            s.mean_error
        ),
    )
}

fn c11_properties() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut notes = Vec::new();

    let q = rose_curve(300).unwrap().points;
    let params = chord_length_params(&q).unwrap();
    let knots = build_knots(&params, 30).unwrap();
    let dense = ParamSequence::uniform(997).unwrap();
    let a = assemble_collocation(&knots, &dense).unwrap();
    let pou = a.matrix().row_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max);
    ok &= pou <= 1e-12;
    notes.push(format!("partition of unity {pou:.1e}"));

    let a = assemble_collocation(&knots, &params).unwrap();
    let gamma = difference_matrix(31, 1600.0).unwrap();
    let lambda = 3e-6;
    let sys = augment_curve(&a, &gamma, &q, lambda).unwrap();
    let p = initial_control_points(&q, 30).unwrap();
    let lhs = sys.objective(&p);
    let rhs = (a.matrix() * &p - &q).norm_squared() + lambda * (gamma.matrix() * &p).norm_squared();
    let aug = ((lhs - rhs) / rhs).abs();
    ok &= aug <= 1e-10;
    notes.push(format!("augmentation {aug:.1e}"));

    let noisy = add_noise(&q, &NoiseSpec { amplitude: 10.0, seed: 4 }).unwrap();
    let energy = ((&noisy.data - &q).norm() - 10.0).abs();
    ok &= energy <= 1e-12;
    notes.push(format!("noise energy {energy:.1e}"));

    let cfg = with_lambda(load("example7_2.toml"), LambdaMode::Estimate);
    let json = |exec: Execution| {
        let mut r = run_experiment(&cfg, &exec).unwrap().report;
        r.wall_time_s = 0.0;
        r.seeds.iter_mut().for_each(|s| s.wall_time_s = 0.0);
        serde_json::to_string(&r).unwrap()
    };
    let same = json(Execution::Sequential) == json(Execution::Parallel);
    ok &= same;
    notes.push(format!("reports identical across runs: {same}"));

    let part = make_partition(sys.a_hat(), 5).unwrap();
    let mut state = curve::init_state(&sys, &p, 9).unwrap();
    let mut locality = true;
    for _ in 0..200 {
        let before = state.control_points().clone();
        let t = state.step(&sys, &part).block_index;
        let block = part.block(t);
        for i in (0..before.nrows()).filter(|i| !block.contains(i)) {
            for f in 0..before.ncols() {
                locality &= before[(i, f)].to_bits() == state.control_points()[(i, f)].to_bits();
            }
        }
    }
    ok &= locality;
    notes.push(format!("block locality: {locality}"));

    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 60.0;
    notes.push(format!("{secs:.1}s"));
    check(ok, notes.join(", "))
}

fn main() {
    let mut failed = 0;
    let mut report = |id: &str, title: &str, outcome: Outcome| {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} C{id} {title}: {detail}");
    };
    report("1", "curve expectation identity", c1_curve_expectation());
    report("2", "surface expectation identity", c2_surface_expectation());
    report("3", "contraction", c3_contraction());
    report("4", "oracle convergence", c4_oracle_convergence());
    let (o5, r5, _) = fixed_vs_unregularized("example7_1.toml", (0.07, 0.13), (0.10, 0.18));
    report("5", "example 7.1", o5);
    let (o6, ..) = fixed_vs_unregularized("example7_2.toml", (0.025, 0.055), (0.0, 1.0));
    report("6", "example 7.2", o6);
    let (o7a, ..) = fixed_vs_unregularized("example7_3_a40.toml", (0.13, 0.23), (0.18, 0.31));
    report("7a", "example 7.3, a=40", o7a);
    let (o7b, _, z7b) = fixed_vs_unregularized("example7_3_a100.toml", (0.24, 0.42), (0.45, 0.72));
    report("7b", "example 7.3, a=100", o7b);
    report("8", "spectral decay", c8_spectral_decay());
    report("9", "optimal-λ placement", c9_sweep());
    report("10", "self-consistent iteration", c10_self_consistent(r5.mean_error, z7b.mean_error));
    report("11", "property suites", c11_properties());
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
