//! End-to-end acceptance checks on the reference pendulum experiment. Each
//! check prints one PASS/FAIL line; the process fails if any check fails.

use std::process::ExitCode;

use passivity_lab::analysis::{doa_estimate, estimate_lfs, DoaOptions, InputPrior, RegionDescriptor};
use passivity_lab::identify::{build_constraints, verify_estimate, VerifyOptions};
use passivity_lab::sim::{simulate, simulate_closed_loop, simulate_with};
use passivity_lab::study::{feasibility_sweep, monte_carlo, transition_window};
use passivity_lab::trajectory::Quadrature;
use passivity_lab::{
    damping_control, identify, Dictionary, Identification, IdentifyOptions, InputSignal, Pendulum, RunConfig,
    SimConfig, StorageEstimate, SupplyKind, Trajectory,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn kept(est: &StorageEstimate) -> Vec<usize> {
    let p = est.prune(0.01).expect("nonzero theta");
    p.pruned_mask.unwrap().iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i).collect()
}

fn names(idx: &[usize]) -> String {
    let d = Dictionary::pendulum();
    let v: Vec<String> = idx.iter().map(|&i| d.features()[i].to_string()).collect();
    format!("{{{}}}", v.join(", "))
}

fn best_storage() -> StorageEstimate {
    let mut theta = vec![0.0; 9];
    theta[0] = 0.123;
    theta[2] = 0.494;
    theta[7] = 7.67;
    StorageEstimate::new(Dictionary::pendulum(), theta, 0.496, SupplyKind::Ofp).unwrap()
}

struct Data {
    cfg: RunConfig,
    clean: Trajectory,
}

fn criterion_1(d: &Data) -> Outcome {
    let opts = d.cfg.identify_options();
    match identify(&d.clean, &Dictionary::pendulum(), &opts).unwrap() {
        Identification::Estimate(e) => {
            let k = kept(&e);
            let ok = (e.margin - 0.471).abs() <= 0.02 && k.contains(&2) && k.contains(&7);
            check(ok, format!("optimal, rho = {:.4} (0.471 +- 0.02), kept {}", e.margin, names(&k)))
        }
        Identification::Infeasible(r) => check(false, format!("infeasible: {}", r.summary())),
    }
}

fn criterion_2(d: &Data) -> Outcome {
    let opts = IdentifyOptions { structural: true, ..d.cfg.identify_options() };
    match identify(&d.clean, &Dictionary::pendulum(), &opts).unwrap() {
        Identification::Estimate(e) => {
            let min_theta = e.theta.iter().enumerate().filter(|(i, _)| *i != 1).map(|(_, t)| *t).fold(f64::INFINITY, f64::min);
            let lmin = e.diagnostics.psd_min_eigenvalue.unwrap_or(f64::NAN);
            let k = kept(&e);
            let (alpha, beta) = (e.theta[2], e.theta[7]);
            let ok = (e.margin - 0.472).abs() <= 0.02
                && min_theta >= -1e-8
                && lmin >= -1e-8
                && k.contains(&2)
                && k.contains(&7)
                && (0.45..=0.55).contains(&alpha)
                && (7.0..=9.0).contains(&beta);
            check(
                ok,
                format!(
                    "optimal, rho = {:.4} (0.472 +- 0.02), min theta_i = {min_theta:.2e}, lambda_min(P) = {lmin:.3e}, alpha = {alpha:.4}, beta = {beta:.4}, kept {}, {} cuts",
                    e.margin,
                    names(&k),
                    e.diagnostics.cuts_added
                ),
            )
        }
        Identification::Infeasible(r) => check(false, format!("infeasible: {}", r.summary())),
    }
}

fn criterion_3(d: &Data) -> Outcome {
    let noisy = d.clean.add_measurement_noise(0, 0.01, d.cfg.noise.seed).unwrap();
    let dict = Dictionary::pendulum();
    let opts = d.cfg.identify_options();
    let t1 = identify(&noisy, &dict, &opts).unwrap();
    let windows: Vec<usize> = (1..=20).collect();
    let rows = feasibility_sweep(&noisy, &dict, &opts, &windows).unwrap();
    let t_star = transition_window(&rows);
    let ok = !t1.is_feasible() && t_star.is_some_and(|t| (5..=15).contains(&t));
    check(
        ok,
        format!(
            "sigma = 0.01: T = 1 {}, transition T* = {}",
            if t1.is_feasible() { "feasible" } else { "infeasible" },
            t_star.map_or("none".into(), |t| t.to_string())
        ),
    )
}

fn criterion_4(d: &Data) -> Outcome {
    let plan = d.cfg.monte_carlo_plan();
    let s = monte_carlo(&d.clean, &Dictionary::pendulum(), &d.cfg.monte_carlo_options(), &plan).unwrap();
    let margins_ok = s.feasible_runs == s.runs && s.per_run.iter().all(|r| r.margin.is_some_and(|m| (0.48..=0.51).contains(&m)));
    let bad_features: Vec<u64> = s
        .per_run
        .iter()
        .filter(|r| !(r.kept.contains(&2) && r.kept.contains(&7)) || r.kept.contains(&3) || r.kept.contains(&4))
        .map(|r| r.seed)
        .collect();
    check(
        s.runs == 20 && margins_ok && bad_features.is_empty(),
        format!(
            "{} runs, {} feasible, rho in [{:.4}, {:.4}] ([0.48, 0.51]); runs violating the kept-feature rule: {:?}",
            s.runs,
            s.feasible_runs,
            s.margin_min.unwrap_or(f64::NAN),
            s.margin_max.unwrap_or(f64::NAN),
            bad_features
        ),
    )
}

fn criterion_5(d: &Data, notes: &mut Vec<String>) -> Outcome {
    let est = StorageEstimate::pendulum_analytic(8.0, 0.5);
    let mut worst = Vec::new();
    let mut total = 0;
    let mut corrected = Vec::new();
    for t in [1, 10, 100, 200] {
        let opts = VerifyOptions { tolerance: 1e-3, ..VerifyOptions::default() };
        let r = verify_estimate(&est, &d.clean, t, &opts).unwrap();
        total += r.violations();
        worst.push(format!("T={t}: {:.2e}", r.worst_dissipation_slack));
        let opts = VerifyOptions { quadrature: Quadrature::EndCorrected, ..opts };
        let r = verify_estimate(&est, &d.clean, t, &opts).unwrap();
        corrected.push(format!("T={t}: {} violations, worst {:.2e}", r.violations(), r.worst_dissipation_slack));
    }
    notes.push(format!("criterion 5 with end-corrected quadrature: {}", corrected.join("; ")));
    check(total == 0, format!("{total} violations at tolerance 1e-3; worst dissipation slack {}", worst.join(", ")))
}

fn criterion_6(d: &Data) -> Outcome {
    let pts: Vec<[f64; 2]> = d.clean.states().map(|x| [x[0], x[1]]).collect();
    let hull = RegionDescriptor::convex_hull(&pts).unwrap();
    let r = doa_estimate(&best_storage(), &hull, &DoaOptions::default()).unwrap();
    check(
        (r.level - 4.45).abs() <= 0.3,
        format!("c = {:.3} (4.45 +- 0.3), {}x{} grid, boundary inside {:.3}", r.level, r.grid_resolution, r.grid_resolution, r.boundary_samples_inside),
    )
}

fn criterion_7(d: &Data, notes: &mut Vec<String>) -> Outcome {
    let est = StorageEstimate::pendulum_analytic(8.0, 0.5);
    let b = [0.0, 1.0];
    let lfs = estimate_lfs(&est, &d.clean, Some(InputPrior::Constant(&b))).unwrap();
    let x2 = d.clean.channel(1);
    let err = |reference: &dyn Fn(usize) -> f64| {
        lfs.values.iter().enumerate().map(|(k, v)| (v - reference(k)).abs()).fold(0.0, f64::max)
    };
    let at_t = err(&|k| -0.5 * x2[k] * x2[k]);
    let averaged = err(&|k| -0.25 * (x2[k] * x2[k] + x2[k + 1] * x2[k + 1]));
    notes.push(format!(
        "criterion 7 against the two-sample average of -0.5 x2^2: max error {averaged:.3e}"
    ));
    check(at_t <= 2e-2, format!("max |L_fS estimate + 0.5 x2(t)^2| = {at_t:.3e} (<= 2e-2) over {} samples", lfs.len()))
}

fn criterion_8(d: &Data) -> Outcome {
    let opts = IdentifyOptions { structural: true, ..d.cfg.identify_options() };
    let est = identify(&d.clean, &Dictionary::pendulum(), &opts).unwrap().estimate().unwrap().prune(0.01).unwrap();
    let plant = Pendulum::new(8.0, 0.5).unwrap();
    let sim = SimConfig { duration: 30.0, max_samples: None, ..SimConfig::default() };
    let x0 = [1.0, 0.0];
    let s = |t: &Trajectory| -> Vec<f64> { t.states().map(|x| est.eval_storage(x, true)).collect() };
    let open = s(&simulate(&plant, &x0, &InputSignal::Zero, &sim).unwrap());
    let ctrl = damping_control(&est, &[0.0, 1.0], 1.0).unwrap();
    let closed = s(&simulate_closed_loop(&plant, &ctrl, &x0, &sim).unwrap());
    let level = 0.01 * open[0];
    let first = |v: &[f64]| v.iter().position(|&s| s <= level);
    let (o, c) = (first(&open), first(&closed));
    let ok = matches!((o, c), (Some(o), Some(c)) if c < o) || (o.is_none() && c.is_some());
    check(ok, format!("1% of S(x0) reached at sample {c:?} closed loop (k = 1) vs {o:?} open loop"))
}

fn criterion_9(d: &Data) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let dict = Dictionary::pendulum();
    let mut worst_grad = 0.0_f64;
    for _ in 0..200 {
        let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let g = dict.eval_feature_gradients(&x);
        for (i, gi) in g.iter().enumerate() {
            for dim in 0..2 {
                let h = 1e-5;
                let (mut xp, mut xm) = (x, x);
                xp[dim] += h;
                xm[dim] -= h;
                let fd = (dict.features()[i].value(&xp) - dict.features()[i].value(&xm)) / (2.0 * h);
                worst_grad = worst_grad.max((gi[dim] - fd).abs() / gi[dim].abs().max(1.0));
            }
        }
    }

    let plant = Pendulum::new(8.0, 0.5).unwrap();
    let end = |h: f64| {
        let cfg = SimConfig { duration: 10.0, sample_period: 0.1, internal_step: h, max_samples: None };
        let t = simulate_with(&plant, &[0.0, 0.0], &cfg, |t, _| InputSignal::ReferenceMultisine.eval(t)).unwrap();
        t.state(t.len() - 1).to_vec()
    };
    let (a, b, c) = (end(0.02), end(0.01), end(0.005));
    let dist = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
    let ratio = dist(&a, &b) / dist(&b, &c);

    let counts_ok = [1usize, 9, 200, 999].iter().all(|&t| {
        let lp = build_constraints(&d.clean, &dict, &IdentifyOptions { window: t, ..IdentifyOptions::default() }).unwrap();
        lp.rows.len() == 2 * d.clean.len() - t + 1
    });

    let mut worst_gap = f64::NEG_INFINITY;
    for t in [1, 10, 200] {
        let opts = IdentifyOptions { window: t, ..IdentifyOptions::default() };
        let free = identify(&d.clean, &dict, &opts).unwrap();
        let cons = identify(&d.clean, &dict, &IdentifyOptions { structural: true, ..opts }).unwrap();
        if let (Some(f), Some(c)) = (free.estimate(), cons.estimate()) {
            worst_gap = worst_gap.max(c.margin - f.margin);
        }
    }

    let ok = worst_grad <= 1e-6 && (12.0..=20.0).contains(&ratio) && counts_ok && worst_gap <= 1e-6;
    check(
        ok,
        format!(
            "gradient rel. error {worst_grad:.2e} (<= 1e-6), RK4 halving ratio {ratio:.2} ([12, 20]), row counts 2N-T+1 {}, max(structural - unconstrained) = {worst_gap:.2e} (<= 1e-6)",
            if counts_ok { "exact" } else { "WRONG" }
        ),
    )
}

fn main() -> ExitCode {
    let cfg = RunConfig::default();
    let clean = cfg.clean_trajectory().expect("reference simulation");
    let data = Data { cfg, clean };
    let mut notes = Vec::new();

    let results = vec![
        ("noise-free reproduction", criterion_1(&data)),
        ("structural reproduction", criterion_2(&data)),
        ("noise infeasibility", criterion_3(&data)),
        ("Monte Carlo robustness", criterion_4(&data)),
        ("oracle feasibility", criterion_5(&data, &mut notes)),
        ("DoA reproduction", criterion_6(&data)),
        ("L_fS reproduction", criterion_7(&data, &mut notes)),
        ("damping property", criterion_8(&data)),
        ("numerics invariants", criterion_9(&data)),
    ];

    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        println!("criterion {}: {} - {name}: {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    for n in &notes {
        println!("note: {n}");
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
