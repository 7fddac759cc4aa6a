//! Integer-lattice and torus geometry.
//!
//! Sites live in `Z^d`; the torus 'T_N^d = Z^d / (N Z)^d' is represented by
//! canonical residues in `[0, N)^d`, stored row-major. Windows of the form
//! `v + [1, N]^d` follow the convention that the corner `v` itself lies just
//! outside the window.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

pub type Coord = i64;

/// A point of the integer lattice `Z^d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site {
    pub coords: Vec<Coord>,
}

impl Site {
    pub fn new(coords: Vec<Coord>) -> Self {
        assert!(!coords.is_empty(), "sites need dimension >= 1");
        Site { coords }
    }

    pub fn origin(d: usize) -> Self {
        Site::new(vec![0; d])
    }

    pub fn dimension(&self) -> usize {
        self.coords.len()
    }

    /// Checked translation by an offset vector.
    pub fn translate(&self, offset: &[Coord]) -> Result<Site> {
        if offset.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                found: offset.len(),
            });
        }
        let coords = self
            .coords
            .iter()
            .zip(offset)
            .map(|(&c, &o)| c.checked_add(o).ok_or(Error::CoordinateOverflow))
            .collect::<Result<Vec<_>>>()?;
        Ok(Site { coords })
    }
}

impl From<Vec<Coord>> for Site {
    fn from(coords: Vec<Coord>) -> Self {
        Site::new(coords)
    }
}

/// The discrete torus `T_N^d` with side `N` and dimension `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorusGeometry {
    d: usize,
    side: Coord,
}

impl TorusGeometry {
    pub fn new(d: usize, side: Coord) -> Result<Self> {
        if d == 0 {
            return Err(Error::Precondition("dimension must be >= 1".into()));
        }
        if side < 1 {
            return Err(Error::Precondition("torus side must be >= 1".into()));
        }
        let geom = TorusGeometry { d, side };
        geom.site_count()?;
        Ok(geom)
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    pub fn side(&self) -> Coord {
        self.side
    }

    /// `N^d`, checked against the platform index range.
    pub fn site_count(&self) -> Result<usize> {
        let mut count: usize = 1;
        for _ in 0..self.d {
            count = count
                .checked_mul(self.side as usize)
                .ok_or(Error::CoordinateOverflow)?;
        }
        Ok(count)
    }

    /// Canonical residue of an arbitrary lattice coordinate.
    pub fn reduce(&self, c: Coord) -> Coord {
        c.rem_euclid(self.side)
    }

    /// Row-major flat index of a (not necessarily canonical) site.
    pub fn flat_index(&self, coords: &[Coord]) -> usize {
        debug_assert_eq!(coords.len(), self.d);
        let mut idx = 0usize;
        for &c in coords {
            idx = idx * self.side as usize + self.reduce(c) as usize;
        }
        idx
    }

    /// Canonical site for a row-major flat index.
    pub fn site_at(&self, mut index: usize) -> Site {
        let mut coords = vec![0; self.d];
        for axis in (0..self.d).rev() {
            coords[axis] = (index % self.side as usize) as Coord;
            index /= self.side as usize;
        }
        Site::new(coords)
    }
}

/// A cubic window `corner + [1, side]^d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoxWindow {
    pub corner: Site,
    pub side: Coord,
}

impl BoxWindow {
    pub fn new(corner: Site, side: Coord) -> Result<Self> {
        if side < 1 {
            return Err(Error::Precondition("box side must be >= 1".into()));
        }
        Ok(BoxWindow { corner, side })
    }

    pub fn dimension(&self) -> usize {
        self.corner.dimension()
    }

    pub fn site_count(&self) -> Result<usize> {
        let mut count: usize = 1;
        for _ in 0..self.dimension() {
            count = count
                .checked_mul(self.side as usize)
                .ok_or(Error::CoordinateOverflow)?;
        }
        Ok(count)
    }

    pub fn contains(&self, coords: &[Coord]) -> bool {
        coords.len() == self.dimension()
            && coords
                .iter()
                .zip(&self.corner.coords)
                .all(|(&c, &v)| c > v && c <= v + self.side)
    }
}

/// Odometer iteration over `[lo, hi]^d`, visiting tuples row-major.
pub(crate) fn for_each_cube_point<F: FnMut(&[Coord])>(
    d: usize,
    lo: Coord,
    hi: Coord,
    mut f: F,
) {
    debug_assert!(lo <= hi);
    let mut point = vec![lo; d];
    loop {
        f(&point);
        let mut axis = d;
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            if point[axis] < hi {
                point[axis] += 1;
                break;
            }
            point[axis] = lo;
        }
    }
}

/// `B(S, n) = ∪_{s ∈ S} (s + [-n, n]^d)` as a set of lattice sites.
pub fn box_neighborhood(sites: &[Site], n: usize) -> Result<BTreeSet<Site>> {
    let d = match sites.first() {
        Some(s) => s.dimension(),
        None => return Err(Error::Precondition("site set must be nonempty".into())),
    };
    for s in sites {
        if s.dimension() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: s.dimension(),
            });
        }
    }
    let mut out = BTreeSet::new();
    let mut offset_err = None;
    for s in sites {
        for_each_cube_point(d, -(n as Coord), n as Coord, |offset| {
            if offset_err.is_some() {
                return;
            }
            match s.translate(offset) {
                Ok(t) => {
                    out.insert(t);
                }
                Err(e) => offset_err = Some(e),
            }
        });
        if let Some(e) = offset_err {
            return Err(e);
        }
    }
    Ok(out)
}

/// Coordinate-wise reduction of a lattice site into `[0, N)^d`.
pub fn torus_project(u: &Site, geom: &TorusGeometry) -> Result<Site> {
    if u.dimension() != geom.dimension() {
        return Err(Error::DimensionMismatch {
            expected: geom.dimension(),
            found: u.dimension(),
        });
    }
    Ok(Site::new(u.coords.iter().map(|&c| geom.reduce(c)).collect()))
}

/// Residues along `axis` occupied by the torus neighborhood `B(S, m)`.
fn occupied_residues(sites: &[Site], geom: &TorusGeometry, m: usize, axis: usize) -> BTreeSet<Coord> {
    let mut occupied = BTreeSet::new();
    for s in sites {
        let base = s.coords[axis];
        for off in -(m as Coord)..=(m as Coord) {
            occupied.insert(geom.reduce(base + off));
        }
    }
    occupied
}

/// Smallest per-axis corner `v` such that no occupied residue segment of
/// `B(S, m)` straddles the boundary of the window `v + [1, N]^d`. Returns
/// `None` when some axis has every residue occupied.
fn free_corner(sites: &[Site], geom: &TorusGeometry, m: usize) -> Option<Site> {
    let n = geom.side();
    let mut corner = Vec::with_capacity(geom.dimension());
    for axis in 0..geom.dimension() {
        let occupied = occupied_residues(sites, geom, m, axis);
        let free = (0..n).find(|c| !occupied.contains(c))?;
        corner.push(free);
    }
    Some(Site::new(corner))
}

/// Shift `v` of a window `v + [1, N]^d` whose unique preimages of the torus
/// sites in `S` carry their full `[-m, m]^d` neighborhoods inside the window.
///
/// Requires `|S| <= k`, `m > 2k` and `N = 2(k+1)m`; the per-axis occupancy
/// count `|S|(2m+1) <= k(2m+1) < N` then guarantees a free residue on every
/// axis, and the corner is chosen as the smallest free value per axis.
pub fn lift_window(
    sites: &[Site],
    geom: &TorusGeometry,
    m: usize,
    k: usize,
) -> Result<Site> {
    if k == 0 || m == 0 {
        return Err(Error::Precondition("k and m must be positive".into()));
    }
    if m <= 2 * k {
        return Err(Error::Precondition(format!(
            "window lifting needs m > 2k (got m={m}, k={k})"
        )));
    }
    let required_side = 2 * (k as Coord + 1) * m as Coord;
    if geom.side() != required_side {
        return Err(Error::Precondition(format!(
            "window lifting needs N = 2(k+1)m = {required_side}, got N = {}",
            geom.side()
        )));
    }
    let canonical = canonical_site_set(sites, geom)?;
    if canonical.len() > k {
        return Err(Error::Precondition(format!(
            "site set of size {} exceeds k = {k}",
            canonical.len()
        )));
    }
    free_corner(&canonical, geom, m).ok_or_else(|| {
        Error::Internal("occupancy bound violated: no free residue".into())
    })
}

/// Projects, deduplicates, and sorts a set of torus sites.
pub fn canonical_site_set(sites: &[Site], geom: &TorusGeometry) -> Result<Vec<Site>> {
    if sites.is_empty() {
        return Err(Error::Precondition("site set must be nonempty".into()));
    }
    let mut set = BTreeSet::new();
    for s in sites {
        set.insert(torus_project(s, geom)?);
    }
    Ok(set.into_iter().collect())
}

/// Corner `u0` of a window `u0 + [1, N]^d` containing `B(S, radius)` for the
/// lifted representatives of the torus sites `S`, when one can be found by
/// per-axis residue avoidance.
pub fn enclosing_window(
    sites: &[Site],
    geom: &TorusGeometry,
    radius: usize,
) -> Result<Site> {
    let canonical = canonical_site_set(sites, geom)?;
    if 2 * radius as Coord + 1 > geom.side() {
        return Err(Error::Precondition(format!(
            "neighborhood of radius {radius} cannot fit in a window of side {}",
            geom.side()
        )));
    }
    free_corner(&canonical, geom, radius).ok_or_else(|| {
        Error::Precondition(format!(
            "no window of side {} contains the {radius}-neighborhood of the site set",
            geom.side()
        ))
    })
}

/// The unique preimage of torus site `s` inside the window `v + [1, N]^d`.
pub fn window_representative(s: &Site, corner: &Site, geom: &TorusGeometry) -> Site {
    let n = geom.side();
    let coords = s
        .coords
        .iter()
        .zip(&corner.coords)
        .map(|(&si, &vi)| vi + 1 + (si - vi - 1).rem_euclid(n))
        .collect();
    Site::new(coords)
}

/// Containment predicate behind `lift_window` and `enclosing_window`: every
/// torus site in `S` has exactly one preimage in `v + [1, N]^d` and that
/// preimage carries its `[-m, m]^d` neighborhood inside the window.
pub fn window_contains_neighborhoods(
    corner: &Site,
    sites: &[Site],
    geom: &TorusGeometry,
    m: usize,
) -> bool {
    let n = geom.side();
    sites.iter().all(|s| {
        let t = window_representative(s, corner, geom);
        t.coords
            .iter()
            .zip(&corner.coords)
            .all(|(&ti, &vi)| ti - m as Coord >= vi + 1 && ti + m as Coord <= vi + n)
    })
}
