use nilheat::kernel::{heat_kernel_g4, heat_kernel_g5, QuadratureConfig};
use nilheat::{Error, GroupPoint, GroupTag};

fn cheap() -> QuadratureConfig {
    QuadratureConfig { error_estimate: false, ..QuadratureConfig::default() }.coarsened()
}

#[test]
fn identity_value_is_positive() {
    let e = GroupPoint::identity(GroupTag::Engel);
    for t in [0.25, 0.5, 1.0] {
        let r = heat_kernel_g4(&e, t, &cheap()).unwrap();
        assert!(r.value > 0.0, "t = {t}: {}", r.value);
        assert!(r.node_count > 0);
    }
}

#[test]
fn engel_identity_scales_homogeneously() {
    // dilation by r maps p_t to p_{r^2 t} with Jacobian r^-7
    let e = GroupPoint::identity(GroupTag::Engel);
    let a = heat_kernel_g4(&e, 0.25, &cheap()).unwrap().value;
    let b = heat_kernel_g4(&e, 1.0, &cheap()).unwrap().value;
    let ratio = a / b / 2f64.powi(7);
    assert!((ratio - 1.0).abs() < 1e-2, "{ratio}");
}

#[test]
fn bad_inputs_are_rejected() {
    let e4 = GroupPoint::identity(GroupTag::Engel);
    let e5 = GroupPoint::identity(GroupTag::Cartan);
    for t in [0.0, -1.0, f64::NAN] {
        assert!(matches!(heat_kernel_g4(&e4, t, &cheap()), Err(Error::Contract(_))));
    }
    assert!(heat_kernel_g4(&e5, 0.25, &cheap()).is_err());
    assert!(heat_kernel_g5(&e4, 0.25, &cheap()).is_err());
    let bad = QuadratureConfig { tail_tol: -1.0, ..QuadratureConfig::default() };
    assert!(heat_kernel_g4(&e4, 0.25, &bad).is_err());
}
