//! Network site layouts and the hidden set of under-performing sites.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Area of the reference deployment, in square planar units.
pub const REFERENCE_AREA: f64 = 180.0;
/// Site count of the reference deployment.
pub const REFERENCE_SITES: usize = 136;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub id: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Extent {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Extent {
            min_x,
            min_y,
            max_x,
            max_y,
        }
    }

    /// Square anchored at the origin with the given area.
    pub fn square_with_area(area: f64) -> Self {
        let side = area.sqrt();
        Extent::new(0.0, 0.0, side, side)
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }

    fn is_degenerate(&self) -> bool {
        !(self.width() > 0.0 && self.height() > 0.0) || !self.width().is_finite() || !self.height().is_finite()
    }

    fn bounding(sites: &[Site]) -> Self {
        let mut e = Extent::new(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for s in sites {
            e.min_x = e.min_x.min(s.x);
            e.min_y = e.min_y.min(s.y);
            e.max_x = e.max_x.max(s.x);
            e.max_y = e.max_y.max(s.y);
        }
        e
    }
}

impl Default for Extent {
    fn default() -> Self {
        Extent::square_with_area(REFERENCE_AREA)
    }
}

/// Immutable site layout. The under-performing set is empty until planted.
#[derive(Debug, Clone)]
pub struct Topology {
    sites: Vec<Site>,
    extent: Extent,
    underperforming: Vec<usize>,
    index: GridIndex,
}

impl Topology {
    /// Build from sites whose ids must be exactly `0..sites.len()` in any order.
    pub fn from_sites(mut sites: Vec<Site>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::param("sites", "topology needs at least one site"));
        }
        sites.sort_by_key(|s| s.id);
        let mut seen = HashSet::with_capacity(sites.len());
        for s in &sites {
            if !seen.insert(s.id) {
                return Err(Error::param("sites", format!("duplicate site id {}", s.id)));
            }
            if !(s.x.is_finite() && s.y.is_finite()) {
                return Err(Error::param(
                    "sites",
                    format!("site {} has non-finite coordinates", s.id),
                ));
            }
        }
        if let Some((pos, s)) = sites.iter().enumerate().find(|(pos, s)| s.id != *pos) {
            return Err(Error::param(
                "sites",
                format!("site ids must be contiguous from 0; expected {pos}, found {}", s.id),
            ));
        }
        let extent = Extent::bounding(&sites);
        Ok(Self::assemble(sites, extent))
    }

    fn assemble(sites: Vec<Site>, extent: Extent) -> Self {
        let index = GridIndex::build(&sites);
        Topology {
            sites,
            extent,
            underperforming: Vec::new(),
            index,
        }
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn extent(&self) -> &Extent {
        &self.extent
    }

    /// Planted under-performing site ids, ascending.
    pub fn underperforming(&self) -> &[usize] {
        &self.underperforming
    }

    pub fn omega(&self) -> usize {
        self.underperforming.len()
    }

    pub fn is_underperforming(&self, site: usize) -> bool {
        self.underperforming.binary_search(&site).is_ok()
    }

    pub fn position(&self, site: usize) -> (f64, f64) {
        let s = &self.sites[site];
        (s.x, s.y)
    }

    /// Copy of this layout with an explicit under-performing set.
    pub fn with_underperforming(&self, ids: &[usize]) -> Result<Self> {
        let mut set = ids.to_vec();
        set.sort_unstable();
        set.dedup();
        if set.len() != ids.len() {
            return Err(Error::param("underperforming", "duplicate site ids"));
        }
        if let Some(&bad) = set.iter().find(|&&id| id >= self.len()) {
            return Err(Error::param("underperforming", format!("site id {bad} out of range")));
        }
        if set.len() >= self.len() {
            return Err(Error::param("underperforming", "must leave at least one regular site"));
        }
        let mut t = self.clone();
        t.underperforming = set;
        Ok(t)
    }

    /// Median distance from a site to its nearest other site; 0 for a single site.
    pub fn median_nearest_neighbor_distance(&self) -> f64 {
        if self.len() < 2 {
            return 0.0;
        }
        let mut d: Vec<f64> = self
            .sites
            .iter()
            .map(|a| {
                self.sites
                    .iter()
                    .filter(|b| b.id != a.id)
                    .map(|b| (a.x - b.x).hypot(a.y - b.y))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        d.sort_by(f64::total_cmp);
        let n = d.len();
        if n % 2 == 1 {
            d[n / 2]
        } else {
            0.5 * (d[n / 2 - 1] + d[n / 2])
        }
    }
}

/// Options for reading a site file.
#[derive(Debug, Clone, Copy)]
pub struct SiteFileFormat {
    pub delimiter: u8,
}

impl Default for SiteFileFormat {
    fn default() -> Self {
        SiteFileFormat { delimiter: b',' }
    }
}

/// Read `id, x, y` records. A first record whose id column is not an integer
/// is treated as a header.
pub fn load_topology(path: impl AsRef<Path>, format: SiteFileFormat) -> Result<Topology> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let sites = parse_sites(&text, format).map_err(|(line, reason)| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    })?;
    if sites.is_empty() {
        return Err(Error::Input {
            path: path.to_path_buf(),
            reason: "no site records".into(),
        });
    }
    Topology::from_sites(sites).map_err(|e| Error::Input {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn parse_sites(text: &str, format: SiteFileFormat) -> std::result::Result<Vec<Site>, (usize, String)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(format.delimiter)
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut sites = Vec::new();
    for (n, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| (n + 1, e.to_string()))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(n + 1);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if rec.len() < 3 {
            return Err((line, format!("expected 3 fields (id, x, y), found {}", rec.len())));
        }
        let id = match rec[0].parse::<usize>() {
            Ok(id) => id,
            Err(_) if n == 0 => continue,
            Err(_) => return Err((line, format!("invalid site id `{}`", &rec[0]))),
        };
        let coord = |i: usize| {
            rec[i]
                .parse::<f64>()
                .map_err(|_| (line, format!("invalid coordinate `{}`", &rec[i])))
        };
        sites.push(Site {
            id,
            x: coord(1)?,
            y: coord(2)?,
        });
    }
    Ok(sites)
}

/// `count` sites uniform in `extent`.
pub fn generate_topology(count: usize, extent: Extent, seed: u64) -> Result<Topology> {
    if count == 0 {
        return Err(Error::param("sites", "site count must be at least 1"));
    }
    if extent.is_degenerate() {
        return Err(Error::param(
            "extent",
            "extent must have positive finite width and height",
        ));
    }
    let mut rng = rng_from_seed(seed);
    let sites = (0..count)
        .map(|id| Site {
            id,
            x: extent.min_x + rng.random::<f64>() * extent.width(),
            y: extent.min_y + rng.random::<f64>() * extent.height(),
        })
        .collect();
    Ok(Topology::assemble(sites, extent))
}

/// Sample `omega` distinct sites as under-performing. `weights`, when given,
/// makes a site's selection probability proportional to its weight (sampling
/// without replacement); otherwise every site is equally likely.
pub fn plant_underperforming(
    topology: &Topology,
    omega: usize,
    weights: Option<&[f64]>,
    seed: u64,
) -> Result<Topology> {
    let m = topology.len();
    if omega == 0 || omega >= m {
        return Err(Error::param(
            "omega",
            format!("need 0 < omega < M, got omega={omega} with M={m}"),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let ids: Vec<usize> = match weights {
        None => index::sample(&mut rng, m, omega).into_vec(),
        Some(w) => {
            if w.len() != m {
                return Err(Error::param(
                    "weights",
                    format!("expected {m} weights, got {}", w.len()),
                ));
            }
            if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::param("weights", "weights must be finite and non-negative"));
            }
            if w.iter().filter(|x| **x > 0.0).count() < omega {
                return Err(Error::param("weights", "fewer positive weights than omega"));
            }
            index::sample_weighted(&mut rng, m, |i| w[i], omega)
                .map_err(|e| Error::param("weights", e.to_string()))?
                .into_vec()
        }
    };
    topology.with_underperforming(&ids)
}

/// Id of the site closest to `(x, y)`; ties go to the lowest id.
pub fn nearest_site(topology: &Topology, x: f64, y: f64) -> usize {
    topology.index.nearest(&topology.sites, x, y)
}

/// Uniform bucket grid over the site bounding box, searched ring by ring.
#[derive(Debug, Clone)]
struct GridIndex {
    origin: (f64, f64),
    cell: (f64, f64),
    dims: (usize, usize),
    cells: Vec<Vec<usize>>,
}

impl GridIndex {
    fn build(sites: &[Site]) -> Self {
        let b = Extent::bounding(sites);
        let side = ((sites.len() as f64).sqrt().ceil() as usize).max(1);
        let w = if b.width() > 0.0 { b.width() / side as f64 } else { 1.0 };
        let h = if b.height() > 0.0 {
            b.height() / side as f64
        } else {
            1.0
        };
        let nx = if b.width() > 0.0 { side } else { 1 };
        let ny = if b.height() > 0.0 { side } else { 1 };
        let mut grid = GridIndex {
            origin: (b.min_x, b.min_y),
            cell: (w, h),
            dims: (nx, ny),
            cells: vec![Vec::new(); nx * ny],
        };
        for s in sites {
            let (cx, cy) = grid.cell_of(s.x, s.y);
            grid.cells[cy * nx + cx].push(s.id);
        }
        grid
    }

    fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let clamp = |v: f64, n: usize| -> usize {
            if v.is_nan() || v <= 0.0 {
                0
            } else {
                (v as usize).min(n - 1)
            }
        };
        (
            clamp((x - self.origin.0) / self.cell.0, self.dims.0),
            clamp((y - self.origin.1) / self.cell.1, self.dims.1),
        )
    }

    fn nearest(&self, sites: &[Site], x: f64, y: f64) -> usize {
        let (cx, cy) = self.cell_of(x, y);
        let (nx, ny) = self.dims;
        let step = self.cell.0.min(self.cell.1);
        let max_ring = nx.max(ny);
        let mut best = (f64::INFINITY, usize::MAX);
        for ring in 0..=max_ring {
            let x0 = cx.saturating_sub(ring);
            let x1 = (cx + ring).min(nx - 1);
            let y0 = cy.saturating_sub(ring);
            let y1 = (cy + ring).min(ny - 1);
            for gy in y0..=y1 {
                for gx in x0..=x1 {
                    let on_ring = gx.abs_diff(cx) == ring || gy.abs_diff(cy) == ring;
                    if !on_ring {
                        continue;
                    }
                    for &id in &self.cells[gy * nx + gx] {
                        let s = &sites[id];
                        let d = (s.x - x).powi(2) + (s.y - y).powi(2);
                        if d < best.0 || (d == best.0 && id < best.1) {
                            best = (d, id);
                        }
                    }
                }
            }
            // Cells beyond this ring are at least `ring * step` away.
            let bound = ring as f64 * step;
            if best.1 != usize::MAX && best.0 < bound * bound {
                break;
            }
        }
        best.1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn linear_scan(t: &Topology, x: f64, y: f64) -> usize {
        let mut best = (f64::INFINITY, 0);
        for s in t.sites() {
            let d = (s.x - x).powi(2) + (s.y - y).powi(2);
            if d < best.0 {
                best = (d, s.id);
            }
        }
        best.1
    }

    fn write_file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_136_sites_with_header() {
        let mut text = String::from("id,x,y\n");
        for i in 0..136 {
            text.push_str(&format!("{i},{},{}\n", i as f64 * 0.1, (i % 7) as f64));
        }
        let f = write_file(&text);
        let t = load_topology(f.path(), SiteFileFormat::default()).unwrap();
        assert_eq!(t.len(), 136);
        assert_eq!(t.extent().min_x, 0.0);
        assert!((t.extent().max_x - 13.5).abs() < 1e-12);
        assert_eq!(t.extent().max_y, 6.0);
    }

    #[test]
    fn single_site_has_point_extent() {
        let f = write_file("0, 2.5, -1\n");
        let t = load_topology(f.path(), SiteFileFormat::default()).unwrap();
        assert_eq!(t.len(), 1);
        let e = t.extent();
        assert_eq!((e.min_x, e.max_x, e.min_y, e.max_y), (2.5, 2.5, -1.0, -1.0));
        assert_eq!(nearest_site(&t, 100.0, 100.0), 0);
    }

    #[test]
    fn semicolon_delimiter() {
        let f = write_file("1;1.0;0\n0;0;0\n");
        let t = load_topology(f.path(), SiteFileFormat { delimiter: b';' }).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.sites()[1].x, 1.0);
    }

    #[test]
    fn rejects_duplicate_empty_and_malformed() {
        let dup = write_file("0,0,0\n5,1,1\n5,2,2\n");
        let err = load_topology(dup.path(), SiteFileFormat::default()).unwrap_err();
        assert!(err.to_string().contains("duplicate site id 5"), "{err}");

        let empty = write_file("id,x,y\n");
        assert!(load_topology(empty.path(), SiteFileFormat::default()).is_err());

        let bad = write_file("0,0,0\n1,abc,0\n");
        let err = load_topology(bad.path(), SiteFileFormat::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");

        let gap = write_file("0,0,0\n2,1,1\n");
        assert!(load_topology(gap.path(), SiteFileFormat::default()).is_err());
    }

    #[test]
    fn generated_sites_stay_inside_and_repeat() {
        let extent = Extent::new(0.0, 0.0, 13.4, 13.4);
        let a = generate_topology(136, extent, 1).unwrap();
        let b = generate_topology(136, extent, 1).unwrap();
        assert_eq!(a.len(), 136);
        assert!(a.sites().iter().all(|s| extent.contains(s.x, s.y)));
        assert_eq!(a.sites(), b.sites());
        assert_eq!(generate_topology(1, extent, 9).unwrap().len(), 1);
        assert!(generate_topology(0, extent, 1).is_err());
        assert!(generate_topology(3, Extent::new(0.0, 0.0, 0.0, 1.0), 1).is_err());
    }

    #[test]
    fn plants_floor_tenth_of_sites() {
        let t = generate_topology(136, Extent::default(), 3).unwrap();
        let omega = (0.1 * 136.0f64).floor() as usize;
        let p = plant_underperforming(&t, omega, None, 5).unwrap();
        assert_eq!(p.omega(), 13);
        assert!(p.underperforming().windows(2).all(|w| w[0] < w[1]));
        assert!(p.underperforming().iter().all(|&j| j < 136));
        let again = plant_underperforming(&t, omega, None, 5).unwrap();
        assert_eq!(p.underperforming(), again.underperforming());
        assert!(plant_underperforming(&t, 0, None, 5).is_err());
        assert!(plant_underperforming(&t, 136, None, 5).is_err());
    }

    #[test]
    fn two_site_planting_is_fair() {
        let t = generate_topology(2, Extent::default(), 0).unwrap();
        let runs = 10_000;
        let zeros = (0..runs)
            .filter(|&s| plant_underperforming(&t, 1, None, s).unwrap().underperforming() == [0])
            .count();
        let freq = zeros as f64 / runs as f64;
        assert!((freq - 0.5).abs() <= 0.03, "freq {freq}");
    }

    #[test]
    fn inclusion_frequency_matches_binomial_law() {
        let m = 20;
        let omega = 4;
        let runs = 10_000u64;
        let t = generate_topology(m, Extent::default(), 0).unwrap();
        let mut hits = vec![0u32; m];
        for s in 0..runs {
            for &j in plant_underperforming(&t, omega, None, s).unwrap().underperforming() {
                hits[j] += 1;
            }
        }
        let p = omega as f64 / m as f64;
        let se = (p * (1.0 - p) / runs as f64).sqrt();
        for (j, h) in hits.iter().enumerate() {
            let f = *h as f64 / runs as f64;
            assert!((f - p).abs() <= 3.0 * se, "site {j}: {f} vs {p}");
        }
    }

    #[test]
    fn weighted_planting_never_picks_zero_weight() {
        let t = generate_topology(6, Extent::default(), 0).unwrap();
        let w = [0.0, 1.0, 0.0, 5.0, 2.0, 0.0];
        for s in 0..200 {
            let p = plant_underperforming(&t, 2, Some(&w), s).unwrap();
            assert!(p.underperforming().iter().all(|&j| w[j] > 0.0));
        }
        assert!(plant_underperforming(&t, 4, Some(&w), 0).is_err());
    }

    #[test]
    fn nearest_exact_position_and_ties() {
        let sites = vec![
            Site { id: 0, x: 0.0, y: 0.0 },
            Site {
                id: 1,
                x: 10.0,
                y: 10.0,
            },
            Site { id: 2, x: 5.0, y: 9.0 },
            Site { id: 3, x: 4.0, y: 0.0 },
            Site { id: 4, x: 10.0, y: 0.0 },
            Site { id: 5, x: 0.0, y: 10.0 },
            Site { id: 6, x: 8.0, y: 3.0 },
            Site { id: 7, x: 2.5, y: 7.5 },
            Site { id: 8, x: 9.0, y: 9.0 },
            Site { id: 9, x: 6.0, y: 0.0 },
        ];
        let t = Topology::from_sites(sites).unwrap();
        assert_eq!(nearest_site(&t, 2.5, 7.5), 7);
        // Sites 3 and 9 are equidistant from (5, 0).
        assert_eq!(nearest_site(&t, 5.0, 0.0), 3);
    }

    #[test]
    fn nearest_agrees_with_linear_scan_far_outside() {
        let t = generate_topology(136, Extent::default(), 11).unwrap();
        for &(x, y) in &[(-500.0, -500.0), (1e4, 3.0), (6.0, -80.0), (f64::MAX / 4.0, 0.0)] {
            assert_eq!(nearest_site(&t, x, y), linear_scan(&t, x, y));
        }
    }

    proptest! {
        #[test]
        fn nearest_matches_linear_scan(
            m in 1usize..60,
            seed in any::<u64>(),
            x in -20.0f64..35.0,
            y in -20.0f64..35.0,
        ) {
            let t = generate_topology(m, Extent::default(), seed).unwrap();
            prop_assert_eq!(nearest_site(&t, x, y), linear_scan(&t, x, y));
        }

        #[test]
        fn nearest_on_lattice_matches_linear_scan(
            n in 1usize..8,
            qx in 0i32..20,
            qy in 0i32..20,
        ) {
            // Integer lattices produce many exact ties.
            let sites = (0..n * n)
                .map(|i| Site { id: i, x: (i % n) as f64, y: (i / n) as f64 })
                .collect();
            let t = Topology::from_sites(sites).unwrap();
            let (x, y) = (qx as f64 * 0.5 - 2.0, qy as f64 * 0.5 - 2.0);
            prop_assert_eq!(nearest_site(&t, x, y), linear_scan(&t, x, y));
        }
    }
}
