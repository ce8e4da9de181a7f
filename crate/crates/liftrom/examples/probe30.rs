use liftrom::bench::avg_rel_error_vs_reduced;
use liftrom::dynamics::{integrate_ode, solve_qbdae, IntegrateOptions, Scheme};
use liftrom::models::*;
use liftrom::reduction::*;

fn main() {
    let cfg = TubularConfig { damkohler: 0.167, ..TubularConfig::default() };
    let input = tubular_input();
    let quartic = build_tubular_quartic(&cfg).unwrap();
    let dae = build_tubular_qbdae(&cfg).unwrap();
    let ic5 = consistent_lift_ic(LiftKind::TubularQuartic { gamma: cfg.gamma },
        &tubular_initial_state(&cfg)).unwrap();
    let opts = IntegrateOptions::span(1e-3, cfg.t_f).unwrap().with_store_every(10);
    let dae_traj = solve_qbdae(&dae, &input, &ic5, &opts).unwrap();
    let snaps = collect_snapshots(&dae_traj, &dae.layout1, (0.005, 20.0025)).unwrap();
    let ew = (0.005, 30.005);
    let vars = ["psi", "theta"];
    for scheme in [Scheme::ImplicitEuler, Scheme::SemiImplicitEuler] {
        for r1 in [10usize, 15, 20, 25, 30] {
            let basis = compute_pod_basis(&snaps, &[r1 / 5; 5]).unwrap();
            let rom = project_quartic(&quartic, &basis, false).unwrap();
            let x0 = basis.project(&ic5).unwrap();
            let ropts = IntegrateOptions::span(1e-3, cfg.t_f).unwrap()
                .with_scheme(scheme).with_store_every(10);
            match integrate_ode(&rom, &input, &x0, &ropts) {
                Ok(t) => println!("{scheme:?} quartic r1={r1}: {:.3e}",
                    avg_rel_error_vs_reduced(&dae_traj, &t, &basis, &vars, ew).unwrap()),
                Err(e) => println!("{scheme:?} quartic r1={r1}: FAILED {e}"),
            }
        }
    }
}
