//! The Engel group (growth vector (2,3,4)) and the Cartan group (growth
//! vector (2,3,5)) in exponential-type coordinates, their Lie algebras and
//! their left-invariant frames.
//!
//! Both algebras share the basis `l1..l5` (the Engel algebra stops at `l4`)
//! with brackets
//!
//! ```text
//! [l1,l2] = l3    [l1,l3] = l4    [l2,l3] = l5 (Cartan only)
//! ```
//!
//! and every other bracket of basis elements zero. The matrix presentation
//! uses the convention `[A,B] = BA - AB`.

use crate::error::{Error, Result};

/// Which of the two groups a value belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum GroupTag {
    #[serde(rename = "g4")]
    Engel,
    #[serde(rename = "g5")]
    Cartan,
}

impl GroupTag {
    pub const fn dim(self) -> usize {
        match self {
            GroupTag::Engel => 4,
            GroupTag::Cartan => 5,
        }
    }

    /// Side of the (block) unipotent matrix presentation.
    pub const fn matrix_size(self) -> usize {
        match self {
            GroupTag::Engel => 4,
            GroupTag::Cartan => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GroupTag::Engel => "g4",
            GroupTag::Cartan => "g5",
        }
    }
}

impl std::str::FromStr for GroupTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "g4" | "engel" | "Engel" => Ok(GroupTag::Engel),
            "g5" | "cartan" | "Cartan" => Ok(GroupTag::Cartan),
            other => Err(Error::Parse(format!("unknown group '{other}' (expected g4 or g5)"))),
        }
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Contract(format!("{what} has non-finite entries")))
    }
}

fn pack(tag: GroupTag, values: &[f64]) -> Result<[f64; 5]> {
    if values.len() != tag.dim() {
        return Err(Error::Contract(format!(
            "{} expects {} coordinates, got {}",
            tag.name(),
            tag.dim(),
            values.len()
        )));
    }
    let mut out = [0.0; 5];
    out[..values.len()].copy_from_slice(values);
    Ok(out)
}

fn same_tag(a: GroupTag, b: GroupTag) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::Contract(format!("group mismatch: {} vs {}", a.name(), b.name())))
    }
}

/// Element `a1 l1 + ... + a_dim l_dim` of the Lie algebra.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgebraVector {
    tag: GroupTag,
    a: [f64; 5],
}

impl AlgebraVector {
    pub fn new(tag: GroupTag, coeffs: &[f64]) -> Result<Self> {
        check_finite(coeffs, "algebra vector")?;
        Ok(Self { tag, a: pack(tag, coeffs)? })
    }

    pub fn zero(tag: GroupTag) -> Self {
        Self { tag, a: [0.0; 5] }
    }

    /// Basis element `l_i` (1-based, matching the usual numbering).
    pub fn basis(tag: GroupTag, i: usize) -> Result<Self> {
        if i == 0 || i > tag.dim() {
            return Err(Error::Contract(format!("basis index {i} out of range 1..={}", tag.dim())));
        }
        let mut a = [0.0; 5];
        a[i - 1] = 1.0;
        Ok(Self { tag, a })
    }

    pub fn tag(&self) -> GroupTag {
        self.tag
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.a[..self.tag.dim()]
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut a = self.a;
        a.iter_mut().for_each(|v| *v *= s);
        Self { tag: self.tag, a }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        same_tag(self.tag, other.tag)?;
        let mut a = self.a;
        a.iter_mut().zip(other.a.iter()).for_each(|(x, y)| *x += y);
        Ok(Self { tag: self.tag, a })
    }

    /// Matrix image of the algebra element: `M1(a1..a4)` for Engel and
    /// `diag(M1(a1,a2,a3,a4), M2(a1,a2,a3,a5))` for Cartan, row-major.
    pub fn to_matrix(&self) -> Vec<f64> {
        let [a1, a2, a3, a4, a5] = self.a;
        let n = self.tag.matrix_size();
        let mut m = vec![0.0; n * n];
        m[1] = -a1;
        m[3] = a4;
        m[n + 2] = -a1;
        m[n + 3] = a3;
        m[2 * n + 3] = a2;
        if self.tag == GroupTag::Cartan {
            let o = 4 * n + 4;
            m[o + 1] = a2;
            m[o + 3] = a5;
            m[o + n + 2] = a2;
            m[o + n + 3] = -a3;
            m[o + 2 * n + 3] = -a1;
        }
        m
    }
}

/// Lie bracket from the structure constants.
pub fn bracket(a: &AlgebraVector, b: &AlgebraVector) -> Result<AlgebraVector> {
    same_tag(a.tag, b.tag)?;
    let (x, y) = (&a.a, &b.a);
    let mut out = [0.0; 5];
    out[2] = x[0] * y[1] - x[1] * y[0];
    out[3] = x[0] * y[2] - x[2] * y[0];
    if a.tag == GroupTag::Cartan {
        out[4] = x[1] * y[2] - x[2] * y[1];
    }
    Ok(AlgebraVector { tag: a.tag, a: out })
}

/// Group element in the coordinates `(x1, .., x_dim)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupPoint {
    tag: GroupTag,
    x: [f64; 5],
}

impl GroupPoint {
    pub fn new(tag: GroupTag, coords: &[f64]) -> Result<Self> {
        check_finite(coords, "group point")?;
        Ok(Self { tag, x: pack(tag, coords)? })
    }

    pub fn identity(tag: GroupTag) -> Self {
        Self { tag, x: [0.0; 5] }
    }

    pub fn tag(&self) -> GroupTag {
        self.tag
    }

    pub fn coords(&self) -> &[f64] {
        &self.x[..self.tag.dim()]
    }

    /// Coordinate `x_i`, 1-based; zero beyond the dimension.
    pub fn x(&self, i: usize) -> f64 {
        self.x[i - 1]
    }

    pub(crate) fn raw(&self) -> [f64; 5] {
        self.x
    }
}

/// Group product in coordinates.
pub fn multiply(g: &GroupPoint, h: &GroupPoint) -> Result<GroupPoint> {
    same_tag(g.tag, h.tag)?;
    let [x1, x2, x3, x4, x5] = g.x;
    let [y1, y2, y3, y4, y5] = h.x;
    let mut z = [x1 + y1, x2 + y2, x3 + y3 - x1 * y2, x4 + y4 + 0.5 * x1 * x1 * y2 - x1 * y3, 0.0];
    if g.tag == GroupTag::Cartan {
        z[4] = x5 + y5 + 0.5 * x1 * y2 * y2 - x2 * y3 + x1 * x2 * y2;
    }
    Ok(GroupPoint { tag: g.tag, x: z })
}

/// Closed-form inverse, solved from `g * g^-1 = e` coordinate by coordinate:
///
/// ```text
/// y1 = -x1, y2 = -x2, y3 = -x3 - x1 x2,
/// y4 = -x4 - x1 x3 - x1^2 x2 / 2,
/// y5 = -x5 - x2 x3 - x1 x2^2 / 2.
/// ```
pub fn inverse(g: &GroupPoint) -> GroupPoint {
    let [x1, x2, x3, x4, x5] = g.x;
    let mut y = [-x1, -x2, -x3 - x1 * x2, -x4 - x1 * x3 - 0.5 * x1 * x1 * x2, 0.0];
    if g.tag == GroupTag::Cartan {
        y[4] = -x5 - x2 * x3 - 0.5 * x1 * x2 * x2;
    }
    GroupPoint { tag: g.tag, x: y }
}

/// Exponential map in coordinates.
pub fn exp_coords(a: &AlgebraVector) -> GroupPoint {
    let [a1, a2, a3, a4, a5] = a.a;
    let mut x = [a1, a2, a3 - 0.5 * a1 * a2, a4 + a1 * a1 * a2 / 6.0 - 0.5 * a1 * a3, 0.0];
    if a.tag == GroupTag::Cartan {
        x[4] = a5 + a1 * a2 * a2 / 3.0 - 0.5 * a2 * a3;
    }
    GroupPoint { tag: a.tag, x }
}

/// Inverse of [`exp_coords`]; the relations are triangular so inversion is
/// algebraic.
pub fn log_coords(g: &GroupPoint) -> AlgebraVector {
    let [x1, x2, x3, x4, x5] = g.x;
    let a3 = x3 + 0.5 * x1 * x2;
    let mut a = [x1, x2, a3, x4 - x1 * x1 * x2 / 6.0 + 0.5 * x1 * a3, 0.0];
    if g.tag == GroupTag::Cartan {
        a[4] = x5 - x1 * x2 * x2 / 3.0 + 0.5 * x2 * a3;
    }
    AlgebraVector { tag: g.tag, a }
}

/// Unipotent matrix image of a group element (`N1`, or `diag(N1, N2)`).
#[derive(Debug, Clone, PartialEq)]
pub struct UnipotentMatrix {
    tag: GroupTag,
    entries: Vec<f64>,
}

impl UnipotentMatrix {
    pub fn from_entries(tag: GroupTag, entries: Vec<f64>) -> Result<Self> {
        let n = tag.matrix_size();
        if entries.len() != n * n {
            return Err(Error::MalformedMatrix(format!(
                "expected {}x{} entries, got {}",
                n,
                n,
                entries.len()
            )));
        }
        Ok(Self { tag, entries })
    }

    pub fn tag(&self) -> GroupTag {
        self.tag
    }

    pub fn size(&self) -> usize {
        self.tag.matrix_size()
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.size() + col]
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        same_tag(self.tag, other.tag)?;
        Ok(Self { tag: self.tag, entries: matmul(&self.entries, &other.entries, self.size()) })
    }
}

pub(crate) fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                c[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    c
}

fn n1_block(x1: f64, x2: f64, x3: f64, x4: f64) -> [[f64; 4]; 4] {
    [[1.0, -x1, 0.5 * x1 * x1, x4], [0.0, 1.0, -x1, x3], [0.0, 0.0, 1.0, x2], [0.0, 0.0, 0.0, 1.0]]
}

fn n2_block(x1: f64, x2: f64, x3: f64, x5: f64) -> [[f64; 4]; 4] {
    [
        [1.0, x2, 0.5 * x2 * x2, x5 - 0.5 * x1 * x2 * x2],
        [0.0, 1.0, x2, -x3 - x1 * x2],
        [0.0, 0.0, 1.0, -x1],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

pub fn to_matrix(g: &GroupPoint) -> UnipotentMatrix {
    let [x1, x2, x3, x4, x5] = g.x;
    let n = g.tag.matrix_size();
    let mut entries = vec![0.0; n * n];
    let mut put = |block: [[f64; 4]; 4], offset: usize| {
        for (r, row) in block.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                entries[(offset + r) * n + offset + c] = *v;
            }
        }
    };
    put(n1_block(x1, x2, x3, x4), 0);
    if g.tag == GroupTag::Cartan {
        put(n2_block(x1, x2, x3, x5), 4);
    }
    UnipotentMatrix { tag: g.tag, entries }
}

/// Tolerance used when checking the entry pattern of an incoming matrix.
pub const MATRIX_PATTERN_TOL: f64 = 1e-9;

/// Reads the coordinates back and checks every entry against the template.
pub fn from_matrix(m: &UnipotentMatrix) -> Result<GroupPoint> {
    let x1 = -m.get(0, 1);
    let x2 = m.get(2, 3);
    let x3 = m.get(1, 3);
    let x4 = m.get(0, 3);
    let g = if m.tag == GroupTag::Cartan {
        let x5 = m.get(4, 7) + 0.5 * x1 * x2 * x2;
        GroupPoint::new(m.tag, &[x1, x2, x3, x4, x5])
    } else {
        GroupPoint::new(m.tag, &[x1, x2, x3, x4])
    }
    .map_err(|e| Error::MalformedMatrix(e.to_string()))?;
    let expected = to_matrix(&g);
    for (idx, (have, want)) in m.entries.iter().zip(expected.entries.iter()).enumerate() {
        if (have - want).abs() > MATRIX_PATTERN_TOL * (1.0 + want.abs()) {
            let n = m.size();
            return Err(Error::MalformedMatrix(format!(
                "entry ({}, {}) is {have}, pattern requires {want}",
                idx / n,
                idx % n
            )));
        }
    }
    Ok(g)
}

/// Tangent vector in the coordinate basis `d/dx1 .. d/dx_dim`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentVector {
    tag: GroupTag,
    v: [f64; 5],
}

impl TangentVector {
    pub fn tag(&self) -> GroupTag {
        self.tag
    }

    pub fn components(&self) -> &[f64] {
        &self.v[..self.tag.dim()]
    }
}

/// Left-invariant field `X_i` at `x` (1-based index), i.e. the velocity of
/// `s -> x * exp(s l_i)` at `s = 0`.
pub fn frame(i: usize, x: &GroupPoint) -> Result<TangentVector> {
    let dim = x.tag.dim();
    if i == 0 || i > dim {
        return Err(Error::Contract(format!("frame index {i} out of range 1..={dim}")));
    }
    let [x1, x2, ..] = x.x;
    let cartan = x.tag == GroupTag::Cartan;
    let mut v = [0.0; 5];
    match i {
        1 => v[0] = 1.0,
        2 => {
            v[1] = 1.0;
            v[2] = -x1;
            v[3] = 0.5 * x1 * x1;
            if cartan {
                v[4] = x1 * x2;
            }
        }
        3 => {
            v[2] = 1.0;
            v[3] = -x1;
            if cartan {
                v[4] = -x2;
            }
        }
        _ => v[i - 1] = 1.0,
    }
    Ok(TangentVector { tag: x.tag, v })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn engel(x: &[f64]) -> GroupPoint {
        GroupPoint::new(GroupTag::Engel, x).unwrap()
    }

    fn cartan(x: &[f64]) -> GroupPoint {
        GroupPoint::new(GroupTag::Cartan, x).unwrap()
    }

    #[test]
    fn identity_is_neutral() {
        let g = engel(&[0.3, -1.2, 0.7, 2.0]);
        let e = GroupPoint::identity(GroupTag::Engel);
        assert_eq!(multiply(&e, &g).unwrap(), g);
        assert_eq!(multiply(&g, &e).unwrap(), g);
    }

    #[test]
    fn products_of_generators() {
        let p = multiply(&engel(&[1.0, 0.0, 0.0, 0.0]), &engel(&[0.0, 1.0, 0.0, 0.0])).unwrap();
        assert_eq!(p.coords(), &[1.0, 1.0, -1.0, 0.5]);
        let p = multiply(&cartan(&[1.0, 0.0, 0.0, 0.0, 0.0]), &cartan(&[0.0, 1.0, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(p.coords(), &[1.0, 1.0, -1.0, 0.5, 0.5]);
    }

    #[test]
    fn inverse_examples() {
        let e = GroupPoint::identity(GroupTag::Cartan);
        assert_eq!(inverse(&e), e);
        assert_eq!(inverse(&engel(&[1.0, 1.0, 0.0, 0.0])).coords(), &[-1.0, -1.0, -1.0, -0.5]);
    }

    #[test]
    fn mixed_tags_are_rejected() {
        let g = GroupPoint::identity(GroupTag::Engel);
        let h = GroupPoint::identity(GroupTag::Cartan);
        assert!(matches!(multiply(&g, &h), Err(Error::Contract(_))));
        let a = AlgebraVector::zero(GroupTag::Engel);
        let b = AlgebraVector::zero(GroupTag::Cartan);
        assert!(bracket(&a, &b).is_err());
    }

    #[test]
    fn exp_and_log_examples() {
        let a = AlgebraVector::new(GroupTag::Engel, &[1.0, 1.0, 0.0, 0.0]).unwrap();
        let x = exp_coords(&a);
        assert_eq!(x.coords()[..3], [1.0, 1.0, -0.5]);
        assert!((x.coords()[3] - 1.0 / 6.0).abs() < 1e-15);
        let back = log_coords(&x);
        for (u, v) in back.coeffs().iter().zip([1.0, 1.0, 0.0, 0.0]) {
            assert!((u - v).abs() < 1e-15);
        }

        let a = AlgebraVector::new(GroupTag::Cartan, &[0.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(exp_coords(&a).coords(), &[0.0, 1.0, 1.0, 0.0, -0.5]);

        let a = AlgebraVector::new(GroupTag::Cartan, &[1.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let x = exp_coords(&a);
        assert!((x.x(5) - 1.0 / 3.0).abs() < 1e-15);
        let half = exp_coords(&a.scale(0.5));
        assert!((multiply(&half, &half).unwrap().x(5) - 1.0 / 3.0).abs() < 1e-15);

        let a = AlgebraVector::new(GroupTag::Cartan, &[2.5, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(exp_coords(&a).coords(), &[2.5, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(log_coords(&GroupPoint::identity(GroupTag::Engel)).coeffs(), &[0.0; 4]);
    }

    #[test]
    fn matrix_entries_follow_template() {
        let m = to_matrix(&engel(&[2.0, 3.0, 5.0, 7.0]));
        assert_eq!(m.get(0, 1), -2.0);
        assert_eq!(m.get(0, 2), 2.0);
        assert_eq!(m.get(1, 3), 5.0);
        assert_eq!(m.get(0, 3), 7.0);
        let id = to_matrix(&GroupPoint::identity(GroupTag::Cartan));
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(id.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(from_matrix(&id).unwrap(), GroupPoint::identity(GroupTag::Cartan));
    }

    #[test]
    fn from_matrix_rejects_broken_pattern() {
        let mut entries = to_matrix(&engel(&[1.0, 2.0, 3.0, 4.0])).entries().to_vec();
        entries[2] += 1e-3;
        let m = UnipotentMatrix::from_entries(GroupTag::Engel, entries).unwrap();
        assert!(matches!(from_matrix(&m), Err(Error::MalformedMatrix(_))));

        let mut entries = to_matrix(&cartan(&[1.0, 2.0, 3.0, 4.0, 5.0])).entries().to_vec();
        entries[3 * 8 + 4] = 0.5; // off-block entry
        let m = UnipotentMatrix::from_entries(GroupTag::Cartan, entries).unwrap();
        assert!(from_matrix(&m).is_err());

        // round-off well inside the tolerance is absorbed
        let mut entries = to_matrix(&engel(&[1.0, 2.0, 3.0, 4.0])).entries().to_vec();
        entries[2] += 1e-12;
        let m = UnipotentMatrix::from_entries(GroupTag::Engel, entries).unwrap();
        assert!(from_matrix(&m).is_ok());
    }

    #[test]
    fn brackets_of_generators() {
        for tag in [GroupTag::Engel, GroupTag::Cartan] {
            let l = |i| AlgebraVector::basis(tag, i).unwrap();
            assert_eq!(bracket(&l(1), &l(2)).unwrap(), l(3));
            assert_eq!(bracket(&l(1), &l(3)).unwrap(), l(4));
        }
        let l = |i| AlgebraVector::basis(GroupTag::Engel, i).unwrap();
        assert_eq!(bracket(&l(2), &l(3)).unwrap(), AlgebraVector::zero(GroupTag::Engel));
        let l = |i| AlgebraVector::basis(GroupTag::Cartan, i).unwrap();
        assert_eq!(bracket(&l(2), &l(3)).unwrap(), l(5));
    }

    #[test]
    fn frame_examples() {
        let v = frame(2, &engel(&[2.0, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(v.components(), &[0.0, 1.0, -2.0, 2.0]);
        let v = frame(2, &cartan(&[1.0, 2.0, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(v.components(), &[0.0, 1.0, -1.0, 0.5, 2.0]);
        let v = frame(3, &cartan(&[1.0, 2.0, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(v.components(), &[0.0, 0.0, 1.0, -1.0, -2.0]);
        for tag in [GroupTag::Engel, GroupTag::Cartan] {
            let e = GroupPoint::identity(tag);
            for i in 1..=tag.dim() {
                let v = frame(i, &e).unwrap();
                for (j, c) in v.components().iter().enumerate() {
                    assert_eq!(*c, if j + 1 == i { 1.0 } else { 0.0 });
                }
            }
            assert!(frame(0, &e).is_err());
            assert!(frame(tag.dim() + 1, &e).is_err());
        }
    }

    #[test]
    fn arity_is_checked() {
        assert!(GroupPoint::new(GroupTag::Cartan, &[0.0; 4]).is_err());
        assert!(GroupPoint::new(GroupTag::Engel, &[0.0, f64::NAN, 0.0, 0.0]).is_err());
    }
}
