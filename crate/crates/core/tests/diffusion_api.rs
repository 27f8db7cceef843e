use nilheat::diffusion::{moments, simulate, Scheme, SimConfig};
use nilheat::GroupTag;

#[test]
fn same_seed_same_samples() {
    let cfg = SimConfig::new(GroupTag::Cartan, 0.25, 2000, 100, 11);
    let (a, b) = (simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
    assert_eq!(a.column(4), b.column(4));
    let c = simulate(&SimConfig { seed: 12, ..cfg }).unwrap();
    assert_ne!(a.column(4), c.column(4));
}

#[test]
fn horizontal_variance_is_two_t() {
    for tag in [GroupTag::Engel, GroupTag::Cartan] {
        for scheme in [Scheme::ItoCorrected, Scheme::Heun] {
            let s = simulate(&SimConfig::new(tag, 0.25, 50_000, 100, 42).with_scheme(scheme)).unwrap();
            let m = moments(&s);
            for (k, mk) in m.iter().enumerate().take(2) {
                assert!((mk.var - 0.5).abs() <= 3.0 * mk.var_se, "{tag:?} {scheme:?} x{}: {mk:?}", k + 1);
                assert!(mk.mean.abs() <= 4.0 * mk.mean_se);
            }
        }
    }
}

#[test]
fn csv_has_one_row_per_path() {
    let s = simulate(&SimConfig::new(GroupTag::Engel, 0.25, 10, 100, 1)).unwrap();
    let mut out = Vec::new();
    s.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "x1,x2,x3,x4");
    assert_eq!(rows.len(), 11);
    for row in &rows[1..] {
        let vals: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(vals.len(), 4);
    }
    let first: Vec<f64> = rows[1].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(first, s.coords(0));
}

#[test]
fn invalid_configs_are_rejected() {
    for cfg in [
        SimConfig::new(GroupTag::Engel, 0.0, 10, 10, 0),
        SimConfig::new(GroupTag::Engel, 0.25, 0, 10, 0),
        SimConfig::new(GroupTag::Engel, 0.25, 10, 99, 0),
    ] {
        assert!(simulate(&cfg).is_err(), "{cfg:?}");
    }
}
