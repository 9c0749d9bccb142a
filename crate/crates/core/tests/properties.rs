use gyrotrack_core::control::{gain_feasible, synthesize_gains, SynthesisOptions};
use gyrotrack_core::liealg::{expm, geodesic_distance, logm, project_so3};
use gyrotrack_core::scenario::{
    run_closed_loop, standard_programs, standard_scenario, NOMINAL_LAMBDA_SUP, NOMINAL_MU_HESS,
};
use gyrotrack_core::{IntegratorConfig, RotationMatrix, Scheme, Vector3};
use proptest::prelude::*;

fn short(duration: f64) -> IntegratorConfig {
    IntegratorConfig {
        step: 1e-3,
        duration,
        scheme: Scheme::Rk4MuntheKaas,
        reproject: true,
    }
}

fn rotation_vector() -> impl Strategy<Value = Vector3<f64>> {
    (-1.7f64..1.7, -1.7f64..1.7, -1.7f64..1.7).prop_map(|(a, b, c)| Vector3::new(a, b, c))
}

proptest! {
    #[test]
    fn logm_inverts_expm(v in rotation_vector()) {
        prop_assume!(v.norm() < 3.0);
        prop_assert!((logm(&expm(&v)) - v).norm() < 1e-10);
    }

    #[test]
    fn geodesic_distance_from_identity_is_angle(v in rotation_vector()) {
        prop_assume!(v.norm() < 3.0);
        let d = geodesic_distance(&RotationMatrix::identity(), &expm(&v));
        prop_assert!((d - v.norm()).abs() < 1e-10);
    }

    #[test]
    fn projection_fixes_rotations(v in rotation_vector()) {
        let r = expm(&v);
        let p = project_so3(r.matrix()).unwrap();
        prop_assert!((p.matrix() - r.matrix()).norm() < 1e-12);
    }

    #[test]
    fn synthesized_gains_are_feasible(kd in 0.2f64..8.0, frac in 0.05f64..0.95, margin in 1.01f64..4.0) {
        let opts = SynthesisOptions { kd, kappa: None, ki_fraction: frac, kp_margin: margin };
        let g = synthesize_gains(&opts, NOMINAL_MU_HESS, NOMINAL_LAMBDA_SUP).unwrap();
        let f = gain_feasible(&g);
        prop_assert!(f.feasible);
        prop_assert!(f.q_positive_definite);
    }
}

#[test]
fn closed_loop_conserves_momentum_on_all_programs() {
    for program in standard_programs() {
        let mut cfg = standard_scenario(program);
        cfg.integrator = short(2.0);
        let run = run_closed_loop(&cfg).unwrap();
        assert_eq!(run.metrics.len(), 2001);
        assert!(
            run.metrics.max_momentum_drift() < 1e-9,
            "{}",
            program.kind()
        );
        assert!(run.metrics.max_reference_momentum_drift() < 1e-9);
        assert!(run.metrics.max_orthogonality_error < 1e-12);
    }
}

#[test]
fn reference_start_stays_on_reference() {
    for program in standard_programs() {
        let mut cfg = standard_scenario(program).starting_on_reference();
        cfg.integrator = short(1.0);
        let run = run_closed_loop(&cfg).unwrap();
        let worst = run.metrics.psi.iter().cloned().fold(0.0, f64::max);
        assert!(worst < 1e-10, "{}: {worst:e}", program.kind());
    }
}

#[test]
fn certified_gains_reduce_tracking_error() {
    let opts = SynthesisOptions {
        kd: 3.0,
        ..Default::default()
    };
    let g = synthesize_gains(&opts, NOMINAL_MU_HESS, NOMINAL_LAMBDA_SUP).unwrap();
    let mut cfg = standard_scenario(standard_programs()[0]).with_gains(g);
    cfg.integrator = short(5.0);
    let run = run_closed_loop(&cfg).unwrap();
    let psi = &run.metrics.psi;
    assert!(psi[psi.len() - 1] < 0.1 * psi[0]);
}
