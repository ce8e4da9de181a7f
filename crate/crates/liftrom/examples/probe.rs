//! Quick exploratory runs of both benchmark models (not part of the test
//! suite; used to eyeball regimes and step-size choices).

use liftrom::dynamics::{
    integrate_ode, solve_qbdae, IntegrateOptions, Scheme, Trajectory,
};
use liftrom::models::{
    build_fhn_fom, build_fhn_lifted_qb, build_tubular_fom, build_tubular_qbdae,
    build_tubular_quartic, consistent_lift_ic, fhn_initial_state, fhn_input,
    tubular_initial_state, tubular_input, FhnConfig, LiftKind, TubularConfig,
};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(String::as_str).unwrap_or("fhn");
    match which {
        "fhn" => probe_fhn(args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1e-3)),
        "tubular" => {
            let d = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.167);
            let dt = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(1e-3);
            probe_tubular(d, dt);
        }
        "small" => probe_small_tubular(),
        other => eprintln!("unknown probe {other}"),
    }
}

fn probe_fhn(dt: f64) {
    let cfg = FhnConfig::default();
    let t0 = std::time::Instant::now();
    let fom = build_fhn_fom(&cfg).unwrap();
    let steps_per_snap = (0.08 / dt).round() as usize;
    let opts = IntegrateOptions::span(dt, cfg.t_f)
        .unwrap()
        .with_scheme(Scheme::Sbdf2)
        .with_store_every(steps_per_snap);
    let traj = integrate_ode(&fom, &fhn_input(), &fhn_initial_state(&cfg), &opts).unwrap();
    println!("fom: {} records in {:.2?}", traj.len(), t0.elapsed());
    let v0 = traj.series("v", 0).unwrap();
    let w0 = traj.series("w", 0).unwrap();
    let vmin = v0.iter().cloned().fold(f64::INFINITY, f64::min);
    let vmax = v0.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let wmin = w0.iter().cloned().fold(f64::INFINITY, f64::min);
    let wmax = w0.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    println!("v(0): [{vmin:.4}, {vmax:.4}]   w(0): [{wmin:.4}, {wmax:.4}]");
    // Sample of the orbit.
    for k in (0..traj.len()).step_by(10) {
        println!("t={:5.2}  v0={:+.5}  w0={:+.5}", traj.times[k], v0[k], w0[k]);
    }
    // Amplitude over the final 2 s.
    let tail: Vec<f64> =
        traj.times.iter().zip(&v0).filter(|(t, _)| **t >= 10.0).map(|(_, v)| *v).collect();
    let amp = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - tail.iter().cloned().fold(f64::INFINITY, f64::min);
    println!("v(0) amplitude over final 2 s: {amp:.3e}");

    // Lifted comparison at the same resolution.
    let t0 = std::time::Instant::now();
    let qb = build_fhn_lifted_qb(&cfg).unwrap();
    let z0 = consistent_lift_ic(LiftKind::FhnQb, &fhn_initial_state(&cfg)).unwrap();
    let tq = integrate_ode(&qb, &fhn_input(), &z0, &opts).unwrap();
    println!("lifted: {} records in {:.2?}", tq.len(), t0.elapsed());
    // Skip the k=0 record (zero initial state makes the relative metric blow up).
    let rel = max_rel_shared(&traj, &tq, 2 * cfg.n, 1);
    println!("max rel err on shared vars (k>=1): {rel:.3e}");
}

fn probe_tubular(damkohler: f64, dt: f64) {
    let cfg = TubularConfig { damkohler, ..TubularConfig::default() };
    let t0 = std::time::Instant::now();
    let fom = build_tubular_fom(&cfg).unwrap();
    let steps_per_snap = (0.01 / dt).round() as usize;
    let opts = IntegrateOptions::span(dt, cfg.t_f)
        .unwrap()
        .with_scheme(Scheme::Sbdf2)
        .with_store_every(steps_per_snap);
    let traj = integrate_ode(&fom, &tubular_input(), &tubular_initial_state(&cfg), &opts).unwrap();
    println!("fom D={damkohler}: {} records in {:.2?}", traj.len(), t0.elapsed());
    let q = traj.series("theta", cfg.n - 1).unwrap();
    for k in (0..traj.len()).step_by(traj.len() / 30) {
        println!("t={:5.2}  theta(1)={:.6}", traj.times[k], q[k]);
    }
    let tail: Vec<f64> =
        traj.times.iter().zip(&q).filter(|(t, _)| **t >= 25.0).map(|(_, v)| *v).collect();
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let amp = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - tail.iter().cloned().fold(f64::INFINITY, f64::min);
    println!("theta(1) final-5s: mean {mean:.6}, amplitude {amp:.4e} (relative {:.4e})", amp / mean);

    // Lifted forms at the same resolution.
    let x0 = tubular_initial_state(&cfg);
    let t0 = std::time::Instant::now();
    let quartic = build_tubular_quartic(&cfg).unwrap();
    let q0 = consistent_lift_ic(LiftKind::TubularQuartic { gamma: cfg.gamma }, &x0).unwrap();
    let tq = integrate_ode(&quartic, &tubular_input(), &q0, &opts).unwrap();
    println!("quartic: {} records in {:.2?}", tq.len(), t0.elapsed());
    let t0 = std::time::Instant::now();
    let dae = build_tubular_qbdae(&cfg).unwrap();
    let full0 = consistent_lift_ic(LiftKind::TubularQbdae { gamma: cfg.gamma }, &x0).unwrap();
    let d0 = full0.rows(0, 5 * cfg.n).into_owned();
    let td = solve_qbdae(&dae, &tubular_input(), &d0, &opts).unwrap();
    println!("qbdae: {} records in {:.2?}", td.len(), t0.elapsed());

    for (label, other) in [("quartic", &tq), ("qbdae", &td)] {
        let plain = max_rel_shared(&traj, other, 2 * cfg.n, 0);
        println!("{label}: plain max rel err on shared vars = {plain:.3e}");
        // Time-shift-optimal comparison over the final period (~7 s), shifts up
        // to +-0.5 s in snapshot steps.
        let dt_snap = traj.times[1] - traj.times[0];
        let period = (7.0 / dt_snap).round() as usize;
        let max_shift = (0.5 / dt_snap).round() as usize;
        let last = traj.len() - 1;
        let window = (last - period)..=last;
        let mut best = f64::INFINITY;
        let mut best_shift = 0isize;
        for m in -(max_shift as isize)..=(max_shift as isize) {
            let mut worst = 0.0f64;
            for k in window.clone() {
                let kk = k as isize + m;
                if kk < 0 || kk as usize > last {
                    worst = f64::INFINITY;
                    break;
                }
                let a = traj.state_at(k);
                let b = other.state_at(kk as usize);
                let mut num = 0.0;
                let mut den = 0.0;
                for i in 0..2 * cfg.n {
                    num += (a[i] - b[i]).powi(2);
                    den += a[i].powi(2);
                }
                worst = worst.max((num / den).sqrt());
            }
            if worst < best {
                best = worst;
                best_shift = m;
            }
        }
        println!(
            "{label}: shift-optimal final-period rel err = {best:.3e} (shift {:+.3} s)",
            best_shift as f64 * dt_snap
        );
    }
}

fn max_rel_shared(a: &Trajectory, b: &Trajectory, shared: usize, skip: usize) -> f64 {
    let mut worst = 0.0f64;
    for k in skip..a.len() {
        let xa = a.state_at(k);
        let xb = b.state_at(k);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..shared {
            num += (xa[i] - xb[i]).powi(2);
            den += xa[i].powi(2);
        }
        worst = worst.max((num / den).sqrt());
    }
    worst
}

#[allow(dead_code)]
fn probe_small_tubular() {
    use liftrom::bench::{run_tubular_experiment, TubularExperimentConfig};
    for (label, q, d1, r2s, f, rd) in [
        ("quartic", vec![15usize], vec![], vec![], vec![], vec![]),
        ("qbdae", vec![], vec![15], vec![9], vec![], vec![]),
        ("pod", vec![], vec![], vec![], vec![5], vec![]),
        ("deim", vec![], vec![], vec![], vec![], vec![8]),
    ] {
        let ec = TubularExperimentConfig {
            model: TubularConfig { n: 30, t_f: 4.0, damkohler: 0.162, ..TubularConfig::default() },
            dt: 1e-3,
            store_every: 20,
            training_end: 3.0,
            quartic_r_values: q,
            qbdae_r1_values: d1,
            r2_values: r2s,
            include_identity_r2: false,
            fom_r_values: if rd.is_empty() { f } else { vec![5] },
            r_deim_values: rd,
            quartic_allow_large: false,
            anchor_r1: 15,
            anchor_r2: 9,
        };
        match run_tubular_experiment(&ec) {
            Ok(out) => {
                for r in &out.errors.records {
                    println!("{label}: {} r1={} err={:.3e}", r.method, r.r1, r.error);
                }
            }
            Err(e) => println!("{label}: FAILED: {e}"),
        }
    }
}
