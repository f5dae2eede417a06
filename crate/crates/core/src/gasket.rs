//! Symbolic geometry of the Sierpinski gasket.
//!
//! Points and cells are addressed by a blowup level `M` (the cell lives in
//! `G^(M) = 2^M G^(0)`) and a word over `{0,1,2}` selecting nested half-size
//! sub-triangles. Digit `d` selects the sub-triangle sitting at corner `d` of
//! its parent, where corner 0 is the lower-left anchor, corner 1 lies along
//! `e1 = (1,0)` and corner 2 along `e2 = (1/2, sqrt(3)/2)`.
//!
//! All positions are kept as integer lattice coordinates `(i, j)` meaning the
//! planar point `side * (i*e1 + j*e2)`; floats only appear in [`Point`].

use std::fmt;
use std::str::FromStr;

use crate::error::{domain, LabError, Result};

pub const SQRT3_2: f64 = 0.866_025_403_784_438_6;

/// Fractal exponents of the gasket together with the stable index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractalConstants {
    pub alpha: f64,
    /// Fractal (Hausdorff) dimension `log 3 / log 2`.
    pub d_f: f64,
    /// Walk dimension `log 5 / log 2`.
    pub d_w: f64,
    /// Spectral dimension `2 d_f / d_w`.
    pub d_s: f64,
    /// Jump-kernel exponent `d_f + alpha d_w / 2`.
    pub d_alpha: f64,
}

impl FractalConstants {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return domain(format!("alpha must lie in (0,2), got {alpha}"));
        }
        let d_f = 3f64.ln() / 2f64.ln();
        let d_w = 5f64.ln() / 2f64.ln();
        Ok(Self {
            alpha,
            d_f,
            d_w,
            d_s: 2.0 * d_f / d_w,
            d_alpha: d_f + alpha * d_w / 2.0,
        })
    }

    /// Exponent `d_f / d_alpha` of the stretched exponential in `log L(t)`.
    pub fn time_exponent(&self) -> f64 {
        self.d_f / self.d_alpha
    }

    /// Exponent `(alpha/2) d_w / d_alpha` carried by the intensity.
    pub fn intensity_exponent(&self) -> f64 {
        0.5 * self.alpha * self.d_w / self.d_alpha
    }

    /// Lifschitz exponent `d_s / alpha`.
    pub fn lifschitz_exponent(&self) -> f64 {
        self.d_s / self.alpha
    }
}

/// Shorthand for [`FractalConstants::new`].
pub fn constants(alpha: f64) -> Result<FractalConstants> {
    FractalConstants::new(alpha)
}

/// Planar coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Planar point of the lattice coordinates `(i, j)` at the given cell side.
pub fn lattice_point(i: i64, j: i64, side: f64) -> Point {
    Point {
        x: side * (i as f64 + 0.5 * j as f64),
        y: side * SQRT3_2 * j as f64,
    }
}

/// Lattice offset of corner `c` of a unit cell.
pub fn corner_offset(c: u8) -> (i64, i64) {
    match c {
        0 => (0, 0),
        1 => (1, 0),
        _ => (0, 1),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    Cell,
    /// Corner `0..3` of the addressed cell.
    Vertex(u8),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Address {
    pub blowup: u32,
    pub digits: Vec<u8>,
    pub tag: Tag,
}

impl Address {
    pub fn cell(blowup: u32, digits: Vec<u8>) -> Self {
        Self { blowup, digits, tag: Tag::Cell }
    }

    pub fn vertex(blowup: u32, digits: Vec<u8>, corner: u8) -> Self {
        Self { blowup, digits, tag: Tag::Vertex(corner) }
    }

    pub fn depth(&self) -> usize {
        self.digits.len()
    }

    /// Side length `2^(M - depth)` of the addressed cell.
    pub fn side(&self) -> f64 {
        2f64.powi(self.blowup as i32 - self.depth() as i32)
    }

    pub fn measure(&self) -> f64 {
        cell_measure(self.depth() as u32, self.blowup)
    }

    fn validate(&self) -> Result<()> {
        if let Some(d) = self.digits.iter().find(|&&d| d > 2) {
            return Err(LabError::Parse(format!("digit {d} outside {{0,1,2}}")));
        }
        if let Tag::Vertex(c) = self.tag {
            if c > 2 {
                return Err(LabError::Parse(format!("corner {c} outside {{0,1,2}}")));
            }
        }
        Ok(())
    }

    /// Anchor lattice coordinates in units of this cell's side.
    pub fn anchor_lattice(&self) -> (i64, i64) {
        anchor_of_digits(&self.digits)
    }

    /// Lattice coordinates (units of the cell side) of the addressed point:
    /// the anchor for cells, the tagged corner for vertices.
    pub fn lattice(&self) -> (i64, i64) {
        let (i, j) = self.anchor_lattice();
        match self.tag {
            Tag::Cell => (i, j),
            Tag::Vertex(c) => {
                let (di, dj) = corner_offset(c);
                (i + di, j + dj)
            }
        }
    }

    pub fn to_point(&self) -> Point {
        let (i, j) = self.lattice();
        lattice_point(i, j, self.side())
    }

    /// Child cell `d` (one level deeper).
    pub fn child(&self, d: u8) -> Address {
        let mut digits = self.digits.clone();
        digits.push(d);
        Address::cell(self.blowup, digits)
    }
}

/// Anchor of a digit word, in units of the side of the addressed cell.
pub fn anchor_of_digits(digits: &[u8]) -> (i64, i64) {
    let mut i = 0i64;
    let mut j = 0i64;
    for &d in digits {
        let (di, dj) = corner_offset(d);
        i = 2 * i + di;
        j = 2 * j + dj;
    }
    (i, j)
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.blowup)?;
        for d in &self.digits {
            write!(f, "{d}")?;
        }
        if let Tag::Vertex(c) = self.tag {
            write!(f, "/{c}")?;
        }
        Ok(())
    }
}

impl FromStr for Address {
    type Err = LabError;

    /// Parses `"M:ddd"` (cell) or `"M:ddd/c"` (corner `c` of that cell).
    fn from_str(s: &str) -> Result<Self> {
        let (m, rest) = s
            .split_once(':')
            .ok_or_else(|| LabError::Parse(format!("address {s:?} lacks ':'")))?;
        let blowup: u32 = m
            .trim()
            .parse()
            .map_err(|_| LabError::Parse(format!("bad blowup in address {s:?}")))?;
        let (word, tag) = match rest.split_once('/') {
            Some((w, c)) => {
                let c: u8 = c
                    .parse()
                    .map_err(|_| LabError::Parse(format!("bad corner in address {s:?}")))?;
                (w, Tag::Vertex(c))
            }
            None => (rest, Tag::Cell),
        };
        let digits = word
            .chars()
            .map(|ch| {
                ch.to_digit(10)
                    .filter(|&d| d < 3)
                    .map(|d| d as u8)
                    .ok_or_else(|| LabError::Parse(format!("bad digit {ch:?} in address {s:?}")))
            })
            .collect::<Result<Vec<u8>>>()?;
        let addr = Address { blowup, digits, tag };
        addr.validate()?;
        Ok(addr)
    }
}

/// Planar coordinates of the addressed anchor (cells) or corner (vertices).
pub fn address_to_point(addr: &Address) -> Point {
    addr.to_point()
}

/// `mu` of a depth-`depth` cell of `G^(M)`: `3^(M - depth)`.
pub fn cell_measure(depth: u32, blowup: u32) -> f64 {
    3f64.powi(blowup as i32 - depth as i32)
}

/// Vertex label in the cyclic group `{id, p1, p2}` acting on `{u, v, w}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LatticeLabel {
    U,
    V,
    W,
}

impl LatticeLabel {
    pub fn index(self) -> u8 {
        match self {
            LatticeLabel::U => 0,
            LatticeLabel::V => 1,
            LatticeLabel::W => 2,
        }
    }

    pub fn from_index(k: i64) -> Self {
        match k.rem_euclid(3) {
            0 => LatticeLabel::U,
            1 => LatticeLabel::V,
            _ => LatticeLabel::W,
        }
    }
}

/// Label `p1^n o p2^m (u)` of the lattice point `n e1 + m e2`, with
/// `p1 = (u v w)` and `p2 = (u w v) = p1^-1`.
pub fn vertex_label(n: i64, m: i64) -> LatticeLabel {
    LatticeLabel::from_index(n - m)
}

/// Corner of `G^(0)` carrying the given label: `u -> (0,0)`, `v -> (1,0)`,
/// `w -> (1/2, sqrt(3)/2)`.
pub fn labeled_corner(label: LatticeLabel) -> Point {
    let (i, j) = corner_offset(label.index());
    lattice_point(i, j, 1.0)
}

/// Projection onto `G^(0)`.
///
/// The unit triangle containing the cell is mapped onto `G^(0)` by the
/// similarity sending each labeled corner to the `G^(0)` corner with the
/// same label; on digit words this is the cyclic shift `d -> d + L (mod 3)`
/// where `L` is the label index of the unit triangle's anchor. Cells larger
/// than a unit triangle cover all of `G^(0)` and project to the root cell.
pub fn project0(addr: &Address) -> Address {
    let m = addr.blowup as usize;
    if addr.depth() < m {
        return match addr.tag {
            Tag::Cell => Address::cell(0, Vec::new()),
            Tag::Vertex(_) => {
                let (i, j) = addr.lattice();
                let scale = 1i64 << (m - addr.depth());
                let label = vertex_label(i * scale, j * scale);
                Address::vertex(0, Vec::new(), label.index())
            }
        };
    }
    let (n, mm) = anchor_of_digits(&addr.digits[..m]);
    let shift = vertex_label(n, mm).index();
    let digits = addr.digits[m..].iter().map(|d| (d + shift) % 3).collect();
    let tag = match addr.tag {
        Tag::Cell => Tag::Cell,
        Tag::Vertex(c) => Tag::Vertex((c + shift) % 3),
    };
    Address { blowup: 0, digits, tag }
}

/// All digit words of length `depth`, in lexicographic order.
pub fn words(depth: usize) -> impl Iterator<Item = Vec<u8>> {
    let total = 3usize.pow(depth as u32);
    (0..total).map(move |mut k| {
        let mut w = vec![0u8; depth];
        for slot in w.iter_mut().rev() {
            *slot = (k % 3) as u8;
            k /= 3;
        }
        w
    })
}

/// Depth-`depth` cells of `G^(M)`.
pub fn cells(blowup: u32, depth: usize) -> impl Iterator<Item = Address> {
    words(depth).map(move |w| Address::cell(blowup, w))
}

/// Whether the lattice point `(i, j)` (units `2^(M-depth)`) is one of the
/// three corners of `G^(M)`.
pub fn is_corner(i: i64, j: i64, depth: usize) -> bool {
    let n = 1i64 << depth;
    (i, j) == (0, 0) || (i, j) == (n, 0) || (i, j) == (0, n)
}

/// Whether `(i, j)` is one of the two corners where `G^(M)` touches the rest
/// of the infinite gasket. These form the boundary of `G^(M)` inside `G`;
/// the origin corner is an interior point.
pub fn is_attachment_corner(i: i64, j: i64, depth: usize) -> bool {
    let n = 1i64 << depth;
    (i, j) == (n, 0) || (i, j) == (0, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn constants_at_alpha_one() {
        let c = constants(1.0).unwrap();
        assert!(close(c.d_f, 1.584963, 1e-6));
        assert!(close(c.d_w, 2.321928, 1e-6));
        assert!(close(c.d_s, 1.365212, 1e-6));
        assert!(close(c.d_alpha, 2.745927, 1e-6));
        assert!(close(c.d_alpha, 2.745903, 1e-4));
        assert!(close(constants(0.5).unwrap().d_alpha, 2.165445, 1e-6));
    }

    #[test]
    fn exponent_sum_identity() {
        for alpha in [0.1, 0.5, 1.0, 1.5, 1.99] {
            let c = constants(alpha).unwrap();
            let s = c.d_f / c.d_alpha + 0.5 * alpha * c.d_w / c.d_alpha;
            assert!(close(s, 1.0, 1e-15));
        }
    }

    #[test]
    fn constants_reject_bad_alpha() {
        for alpha in [0.0, 2.0, -1.0, f64::NAN] {
            assert!(matches!(constants(alpha), Err(LabError::Domain(_))));
        }
    }

    #[test]
    fn anchors() {
        let p = address_to_point(&Address::cell(0, vec![]));
        assert_eq!((p.x, p.y), (0.0, 0.0));
        let p = address_to_point(&Address::cell(0, vec![1]));
        assert_eq!((p.x, p.y), (0.5, 0.0));
        let a = Address::cell(1, vec![]);
        assert_eq!(a.to_point(), Point { x: 0.0, y: 0.0 });
        assert_eq!(a.side(), 2.0);
        let top = Address::cell(0, vec![2]).to_point();
        assert!(close(top.x, 0.25, 1e-15) && close(top.y, SQRT3_2 / 2.0, 1e-15));
    }

    #[test]
    fn measures() {
        assert_eq!(cell_measure(0, 0), 1.0);
        assert!(close(cell_measure(2, 0), 1.0 / 9.0, 1e-16));
        assert_eq!(cell_measure(0, 3), 27.0);
    }

    #[test]
    fn labels() {
        assert_eq!(vertex_label(0, 0), LatticeLabel::U);
        assert_eq!(vertex_label(1, 0), LatticeLabel::V);
        assert_eq!(vertex_label(0, 3), LatticeLabel::U);
        assert_eq!(vertex_label(0, 1), LatticeLabel::W);
        for n in 0..=9 {
            for m in 0..=9 {
                assert_eq!(vertex_label(n + 3, m), vertex_label(n, m));
                assert_eq!(vertex_label(n, m + 3), vertex_label(n, m));
            }
        }
    }

    #[test]
    fn unit_triangles_carry_all_three_labels() {
        for cell in cells(3, 3) {
            let (i, j) = cell.anchor_lattice();
            let mut seen: Vec<u8> = (0..3u8)
                .map(|c| {
                    let (di, dj) = corner_offset(c);
                    vertex_label(i + di, j + dj).index()
                })
                .collect();
            seen.sort();
            assert_eq!(seen, vec![0, 1, 2]);
        }
    }

    #[test]
    fn address_text_form() {
        let a: Address = "2:012".parse().unwrap();
        assert_eq!(a, Address::cell(2, vec![0, 1, 2]));
        assert_eq!(a.to_string(), "2:012");
        let v: Address = "0:1/2".parse().unwrap();
        assert_eq!(v, Address::vertex(0, vec![1], 2));
        assert_eq!(v.to_string(), "0:1/2");
        assert_eq!("3:".parse::<Address>().unwrap(), Address::cell(3, vec![]));
        for bad in ["2012", "2:013", "x:0", "1:0/5"] {
            assert!(bad.parse::<Address>().is_err(), "{bad}");
        }
    }

    #[test]
    fn projection_identity_on_unit_gasket() {
        for a in cells(0, 3) {
            assert_eq!(project0(&a), a);
        }
    }

    #[test]
    fn projection_preimage_count() {
        // depth-1 cells of G^(0) seen from G^(2) at address depth 3
        let mut counts = [0usize; 3];
        for a in cells(2, 3) {
            let p = project0(&a);
            assert_eq!(p.blowup, 0);
            counts[p.digits[0] as usize] += 1;
        }
        assert_eq!(counts, [9, 9, 9]);
    }

    #[test]
    fn projected_lattice_points_keep_their_label() {
        let m = 3u32;
        for cell in cells(m, m as usize) {
            for c in 0..3u8 {
                let v = Address::vertex(m, cell.digits.clone(), c);
                let (i, j) = v.lattice();
                let p = project0(&v);
                assert!(p.digits.is_empty());
                let Tag::Vertex(corner) = p.tag else { panic!() };
                assert_eq!(corner, vertex_label(i, j).index());
            }
        }
    }

    #[test]
    fn projection_is_a_similarity_on_unit_triangles() {
        // the three children of a projected cell stay the three children
        for unit in cells(2, 2) {
            let mut kids: Vec<Vec<u8>> =
                (0..3u8).map(|d| project0(&unit.child(d)).digits).collect();
            kids.sort();
            assert_eq!(kids, vec![vec![0], vec![1], vec![2]]);
        }
    }

    #[test]
    fn children_form_half_scale_triangle() {
        for parent in cells(1, 3) {
            let pts: Vec<Point> = (0..3u8).map(|d| parent.child(d).to_point()).collect();
            let half = parent.side() / 2.0;
            for (a, b) in [(0, 1), (1, 2), (0, 2)] {
                assert!(close(pts[a].dist(&pts[b]), half, 1e-12));
            }
        }
    }

    #[test]
    fn corners() {
        assert!(is_corner(0, 0, 2) && is_corner(4, 0, 2) && is_corner(0, 4, 2));
        assert!(!is_corner(2, 2, 2) && !is_corner(0, 2, 2));
        assert!(!is_attachment_corner(0, 0, 2));
        assert!(is_attachment_corner(4, 0, 2) && is_attachment_corner(0, 4, 2));
    }
}
