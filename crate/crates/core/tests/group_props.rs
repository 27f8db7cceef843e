use nilheat::group::{bracket, exp_coords, from_matrix, inverse, log_coords, multiply, to_matrix};
use nilheat::{AlgebraVector, GroupPoint, GroupTag};
use proptest::prelude::*;

fn tag() -> impl Strategy<Value = GroupTag> {
    prop_oneof![Just(GroupTag::Engel), Just(GroupTag::Cartan)]
}

fn coords(tag: GroupTag) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, tag.dim())
}

fn point(tag: GroupTag) -> impl Strategy<Value = GroupPoint> {
    coords(tag).prop_map(move |c| GroupPoint::new(tag, &c).unwrap())
}

fn vector(tag: GroupTag) -> impl Strategy<Value = AlgebraVector> {
    coords(tag).prop_map(move |c| AlgebraVector::new(tag, &c).unwrap())
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn associativity((g, h, k) in tag().prop_flat_map(|t| (point(t), point(t), point(t)))) {
        let left = multiply(&multiply(&g, &h).unwrap(), &k).unwrap();
        let right = multiply(&g, &multiply(&h, &k).unwrap()).unwrap();
        prop_assert!(close(left.coords(), right.coords(), 1e-12));
    }

    #[test]
    fn inverse_is_two_sided(g in tag().prop_flat_map(point)) {
        let e = vec![0.0; g.tag().dim()];
        prop_assert!(close(multiply(&g, &inverse(&g)).unwrap().coords(), &e, 1e-12));
        prop_assert!(close(multiply(&inverse(&g), &g).unwrap().coords(), &e, 1e-12));
    }

    #[test]
    fn matrix_map_is_a_homomorphism((g, h) in tag().prop_flat_map(|t| (point(t), point(t)))) {
        let gh = to_matrix(&multiply(&g, &h).unwrap());
        let prod = to_matrix(&g).mul(&to_matrix(&h)).unwrap();
        prop_assert!(close(gh.entries(), prod.entries(), 1e-12));
        prop_assert!(close(from_matrix(&prod).unwrap().coords(), multiply(&g, &h).unwrap().coords(), 1e-12));
    }

    #[test]
    fn exp_and_log_are_inverse(a in tag().prop_flat_map(vector)) {
        let back = log_coords(&exp_coords(&a));
        prop_assert!(close(back.coeffs(), a.coeffs(), 1e-12));
    }

    #[test]
    fn one_parameter_subgroups(a in tag().prop_flat_map(vector), s in -2.0..2.0f64, t in -2.0..2.0f64) {
        let sum = exp_coords(&a.scale(s + t));
        let prod = multiply(&exp_coords(&a.scale(s)), &exp_coords(&a.scale(t))).unwrap();
        prop_assert!(close(sum.coords(), prod.coords(), 1e-12), "{:?} vs {:?}", sum.coords(), prod.coords());
    }

    #[test]
    fn exp_matches_matrix_exponential(a in tag().prop_flat_map(vector)) {
        let m = a.to_matrix();
        let n = a.tag().matrix_size();
        let mut sum: Vec<f64> = (0..n * n).map(|k| if k % (n + 1) == 0 { 1.0 } else { 0.0 }).collect();
        let mut term = sum.clone();
        for k in 1..n {
            let mut next = vec![0.0; n * n];
            for r in 0..n {
                for c in 0..n {
                    next[r * n + c] = (0..n).map(|j| term[r * n + j] * m[j * n + c]).sum::<f64>() / k as f64;
                }
            }
            sum.iter_mut().zip(&next).for_each(|(s, t)| *s += t);
            term = next;
        }
        prop_assert!(close(to_matrix(&exp_coords(&a)).entries(), &sum, 1e-12));
    }

    #[test]
    fn bracket_is_antisymmetric_and_satisfies_jacobi(
        (a, b, c) in tag().prop_flat_map(|t| (vector(t), vector(t), vector(t)))
    ) {
        let ab = bracket(&a, &b).unwrap();
        let ba = bracket(&b, &a).unwrap();
        prop_assert!(close(ab.coeffs(), ba.scale(-1.0).coeffs(), 1e-12));
        let j = bracket(&a, &bracket(&b, &c).unwrap()).unwrap()
            .add(&bracket(&b, &bracket(&c, &a).unwrap()).unwrap()).unwrap()
            .add(&bracket(&c, &bracket(&a, &b).unwrap()).unwrap()).unwrap();
        prop_assert!(j.coeffs().iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn three_step_nilpotent((a, b, c, d) in tag().prop_flat_map(|t| (vector(t), vector(t), vector(t), vector(t)))) {
        let deep = bracket(&a, &bracket(&b, &bracket(&c, &d).unwrap()).unwrap()).unwrap();
        prop_assert!(deep.coeffs().iter().all(|v| *v == 0.0));
    }
}

#[test]
fn matrix_commutator_matches_bracket() {
    for tag in [GroupTag::Engel, GroupTag::Cartan] {
        for i in 1..=tag.dim() {
            for j in 1..=tag.dim() {
                let a = AlgebraVector::basis(tag, i).unwrap();
                let b = AlgebraVector::basis(tag, j).unwrap();
                let (ma, mb) = (a.to_matrix(), b.to_matrix());
                let n = tag.matrix_size();
                let mut comm = vec![0.0; n * n];
                for r in 0..n {
                    for c in 0..n {
                        for k in 0..n {
                            comm[r * n + c] += mb[r * n + k] * ma[k * n + c] - ma[r * n + k] * mb[k * n + c];
                        }
                    }
                }
                assert_eq!(bracket(&a, &b).unwrap().to_matrix(), comm, "{tag:?} [{i}, {j}]");
            }
        }
    }
}
