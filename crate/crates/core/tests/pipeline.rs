use lc_deflation::deflation::u_distance_sq;
use lc_deflation::driver::{run, Provenance};
use lc_deflation::energy::residual;
use lc_deflation::export::{export_solution, import_solution};
use lc_deflation::presets::{ExperimentPreset, PresetName};
use lc_deflation::sparse::norm2;
use lc_deflation::sweep::theta_m;

fn preset(name: PresetName, levels: usize) -> ExperimentPreset {
    let mut p = ExperimentPreset::new(name);
    p.levels = levels;
    p
}

#[test]
fn without_deflation_the_tilt_twist_guesses_give_one_state() {
    let mut p = preset(PresetName::TiltTwist, 0);
    p.use_deflation = false;
    let r = run(&p).unwrap();
    assert_eq!(r.states.len(), 1);
    assert!((r.report.solutions[0].final_energy() - 3.701).abs() < 0.01);
    assert!(r.report.solutions.iter().all(|s| s.provenance != Provenance::Deflated));
}

#[test]
fn coarse_tilt_twist_solutions_are_distinct_equilibria() {
    let r = run(&preset(PresetName::TiltTwist, 0)).unwrap();
    assert_eq!(r.states.len(), 3);
    let p = &r.report.config;
    for (i, a) in r.states.iter().enumerate() {
        let res = residual(&r.finest, &p.params, p.model, a).unwrap();
        assert!(norm2(&res) <= p.newton.fooc_tol);
        for b in &r.states[i + 1..] {
            assert!(u_distance_sq(&r.finest, a, b).unwrap().sqrt() > 1e-3);
        }
    }
    // planar twist has no out-of-plane tilt, the two others tilt by opposite amounts
    let mut tilts: Vec<f64> = r.states.iter().map(theta_m).collect();
    tilts.sort_by(f64::total_cmp);
    // the planar state keeps a trace of the guess tilt at the 1e-4 residual tolerance
    assert!(tilts[0] < 1e-3 && tilts[1] > 0.1, "{tilts:?}");
    assert!((tilts[1] - tilts[2]).abs() < 1e-3);
}

#[test]
fn exported_solution_is_still_an_equilibrium() {
    let r = run(&preset(PresetName::Freedericksz, 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = &r.report.config;
    for (k, st) in r.states.iter().enumerate() {
        let path = dir.path().join(format!("u{k}.csv"));
        export_solution(st, &path).unwrap();
        let back = import_solution(&path, p.periodic_x).unwrap();
        let res = residual(&r.finest, &p.params, p.model, &back).unwrap();
        assert!(norm2(&res) <= p.newton.fooc_tol, "solution {k}: {}", norm2(&res));
    }
}

#[test]
fn work_is_fully_attributed() {
    let mut p = preset(PresetName::Disclination, 1);
    p.linear.preconditioner = lc_deflation::linear::PreconditionerKind::Multigrid;
    let r = run(&p).unwrap();
    let rep = &r.report;
    assert_eq!(rep.attributed_iterations() + rep.anonymous_iterations(), rep.total_newton_iterations);
    let wu: f64 = rep.solutions.iter().map(|s| s.work_units).sum::<f64>()
        + rep.anonymous.iter().map(|a| a.work_units).sum::<f64>();
    assert!(rep.solver.work_units > 0.0);
    assert!((wu - rep.solver.work_units).abs() <= 1e-9 * rep.solver.work_units);
}
