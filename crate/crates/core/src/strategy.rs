//! Belief-simplex discretization, cooperation regions, the sharing-status
//! flag and the constrained grim trigger (CGT) policy.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{Action, Belief};

/// Default cap on the number of grid points.
pub const DEFAULT_POINT_CAP: usize = 5_000_000;

/// All lattice points `k / R` of the probability simplex.
///
/// Points are ordered lexicographically by their integer coordinates, so for
/// two states index `i` is the belief with `P(X = 0) = i / R`.
#[derive(Debug)]
pub struct SimplexGrid {
    num_states: usize,
    resolution: u32,
    lattice: Vec<u32>,
    points: Vec<Belief>,
    lookup: HashMap<Vec<u32>, usize>,
}

impl PartialEq for SimplexGrid {
    fn eq(&self, other: &Self) -> bool {
        self.num_states == other.num_states && self.resolution == other.resolution
    }
}

/// Number of lattice points, `C(R + n - 1, n - 1)`.
pub fn lattice_size(num_states: usize, resolution: u32) -> u128 {
    let k = num_states.saturating_sub(1) as u128;
    let mut acc: u128 = 1;
    for i in 1..=k {
        acc = acc.saturating_mul(resolution as u128 + i) / i;
    }
    acc
}

fn compositions(num_states: usize, resolution: u32, out: &mut Vec<u32>) {
    fn rec(prefix: &mut Vec<u32>, left: u32, slots: usize, out: &mut Vec<u32>) {
        if slots == 1 {
            out.extend_from_slice(prefix);
            out.push(left);
            return;
        }
        for k in 0..=left {
            prefix.push(k);
            rec(prefix, left - k, slots - 1, out);
            prefix.pop();
        }
    }
    rec(
        &mut Vec::with_capacity(num_states),
        resolution,
        num_states,
        out,
    );
}

impl SimplexGrid {
    pub fn build(num_states: usize, resolution: u32) -> Result<Arc<SimplexGrid>> {
        SimplexGrid::build_with_cap(num_states, resolution, DEFAULT_POINT_CAP)
    }

    pub fn build_with_cap(
        num_states: usize,
        resolution: u32,
        cap: usize,
    ) -> Result<Arc<SimplexGrid>> {
        if num_states < 2 {
            return Err(Error::DimensionMismatch(format!(
                "grid needs at least 2 states, got {num_states}"
            )));
        }
        if resolution == 0 {
            return Err(Error::InvalidParams(
                "grid resolution must be at least 1".into(),
            ));
        }
        let count = lattice_size(num_states, resolution);
        if count > cap as u128 {
            return Err(Error::ResolutionTooLarge { points: count, cap });
        }
        let mut lattice = Vec::with_capacity(count as usize * num_states);
        compositions(num_states, resolution, &mut lattice);
        let r = resolution as f64;
        let points: Vec<Belief> = lattice
            .chunks(num_states)
            .map(|c| Belief::new(c.iter().map(|&k| k as f64 / r).collect()).expect("lattice point"))
            .collect();
        let lookup = lattice
            .chunks(num_states)
            .enumerate()
            .map(|(i, c)| (c.to_vec(), i))
            .collect();
        Ok(Arc::new(SimplexGrid {
            num_states,
            resolution,
            lattice,
            points,
            lookup,
        }))
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.resolution as f64
    }

    pub fn point(&self, index: usize) -> &Belief {
        &self.points[index]
    }

    pub fn points(&self) -> &[Belief] {
        &self.points
    }

    /// Integer coordinates (summing to the resolution) of a grid point.
    pub fn lattice(&self, index: usize) -> &[u32] {
        &self.lattice[index * self.num_states..(index + 1) * self.num_states]
    }

    pub fn index_of(&self, lattice: &[u32]) -> Option<usize> {
        if self.num_states == 2 {
            return (lattice.len() == 2 && lattice[0] + lattice[1] == self.resolution)
                .then_some(lattice[0] as usize);
        }
        self.lookup.get(lattice).copied()
    }

    /// Nearest grid point in Euclidean distance, ties going to the smallest
    /// index.
    pub fn nearest(&self, belief: &Belief) -> Result<usize> {
        if belief.len() != self.num_states {
            return Err(Error::GridMismatch(format!(
                "belief has {} entries, grid has {} states",
                belief.len(),
                self.num_states
            )));
        }
        Ok(self.nearest_unchecked(belief.probs()))
    }

    pub(crate) fn nearest_unchecked(&self, probs: &[f64]) -> usize {
        let r = self.resolution as f64;
        let n = self.num_states;
        let scaled: Vec<f64> = probs.iter().map(|p| p * r).collect();
        let mut base: Vec<u32> = scaled.iter().map(|s| s.floor().max(0.0) as u32).collect();
        let assigned: u32 = base.iter().sum();
        let deficit = self.resolution as i64 - assigned as i64;
        if deficit < 0 || deficit >= n as i64 {
            return self.nearest_scan(probs);
        }
        let deficit = deficit as usize;
        let mut order: Vec<usize> = (0..n).collect();
        let frac = |i: usize| scaled[i] - base[i] as f64;
        order.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)).then(a.cmp(&b)));
        if deficit > 0 && deficit < n {
            let cut = frac(order[deficit - 1]) - frac(order[deficit]);
            if cut.abs() < 1e-12 {
                return self.nearest_scan(probs);
            }
        }
        for &i in order.iter().take(deficit) {
            base[i] += 1;
        }
        self.index_of(&base)
            .unwrap_or_else(|| self.nearest_scan(probs))
    }

    fn nearest_scan(&self, probs: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d: f64 = p
                .probs()
                .iter()
                .zip(probs)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < best_d - 1e-12 {
                best = i;
                best_d = d;
            }
        }
        best
    }
}

/// A set of grid points, used for cooperation regions and algorithm
/// iterates.
#[derive(Clone)]
pub struct Region {
    grid: Arc<SimplexGrid>,
    members: Vec<bool>,
}

impl fmt::Debug for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Region")
            .field("num_states", &self.grid.num_states)
            .field("resolution", &self.grid.resolution)
            .field("size", &self.len())
            .finish()
    }
}

impl PartialEq for Region {
    fn eq(&self, other: &Self) -> bool {
        *self.grid == *other.grid && self.members == other.members
    }
}

impl Eq for Region {}

impl Region {
    pub fn empty(grid: &Arc<SimplexGrid>) -> Region {
        Region {
            grid: Arc::clone(grid),
            members: vec![false; grid.len()],
        }
    }

    pub fn full(grid: &Arc<SimplexGrid>) -> Region {
        Region {
            grid: Arc::clone(grid),
            members: vec![true; grid.len()],
        }
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(
        grid: &Arc<SimplexGrid>,
        indices: I,
    ) -> Result<Region> {
        let mut region = Region::empty(grid);
        for i in indices {
            if i >= grid.len() {
                return Err(Error::GridMismatch(format!(
                    "index {i} out of range for a grid of {} points",
                    grid.len()
                )));
            }
            region.members[i] = true;
        }
        Ok(region)
    }

    pub fn from_predicate(grid: &Arc<SimplexGrid>, keep: impl FnMut(&Belief) -> bool) -> Region {
        Region {
            grid: Arc::clone(grid),
            members: grid.points().iter().map(keep).collect(),
        }
    }

    pub(crate) fn from_mask(grid: &Arc<SimplexGrid>, members: Vec<bool>) -> Region {
        debug_assert_eq!(members.len(), grid.len());
        Region {
            grid: Arc::clone(grid),
            members,
        }
    }

    pub fn grid(&self) -> &Arc<SimplexGrid> {
        &self.grid
    }

    pub fn mask(&self) -> &[bool] {
        &self.members
    }

    #[inline]
    pub fn contains_index(&self, index: usize) -> bool {
        self.members[index]
    }

    /// Membership of an arbitrary belief, decided at its nearest grid point.
    pub fn contains(&self, belief: &Belief) -> Result<bool> {
        Ok(self.members[self.grid.nearest(belief)?])
    }

    pub fn len(&self) -> usize {
        self.members.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.members.iter().any(|&m| m)
    }

    pub fn is_full(&self) -> bool {
        self.members.iter().all(|&m| m)
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.members
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| i)
    }

    pub fn check_same_grid(&self, other: &Region) -> Result<()> {
        if *self.grid != *other.grid {
            return Err(Error::GridMismatch(format!(
                "regions on grids ({}, {}) and ({}, {})",
                self.grid.num_states,
                self.grid.resolution,
                other.grid.num_states,
                other.grid.resolution
            )));
        }
        Ok(())
    }

    fn zip_with(&self, other: &Region, op: impl Fn(bool, bool) -> bool) -> Result<Region> {
        self.check_same_grid(other)?;
        Ok(Region {
            grid: Arc::clone(&self.grid),
            members: self
                .members
                .iter()
                .zip(&other.members)
                .map(|(&a, &b)| op(a, b))
                .collect(),
        })
    }

    pub fn union(&self, other: &Region) -> Result<Region> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &Region) -> Result<Region> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn difference(&self, other: &Region) -> Result<Region> {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn is_subset(&self, other: &Region) -> Result<bool> {
        self.check_same_grid(other)?;
        Ok(self
            .members
            .iter()
            .zip(&other.members)
            .all(|(&a, &b)| !a || b))
    }

    /// Indices in `self` but not in `other`, plus those in `other` but not in `self`.
    pub fn symmetric_difference(&self, other: &Region) -> Result<Vec<usize>> {
        self.check_same_grid(other)?;
        Ok(self
            .members
            .iter()
            .zip(&other.members)
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(i, _)| i)
            .collect())
    }

    /// Maximal runs of consecutive member indices, as inclusive index pairs.
    pub fn runs(&self) -> Vec<(usize, usize)> {
        let mut runs = Vec::new();
        let mut start = None;
        for (i, &m) in self.members.iter().enumerate() {
            match (m, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    runs.push((s, i - 1));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            runs.push((s, self.members.len() - 1));
        }
        runs
    }

    /// For two-state grids: member runs as closed intervals of `P(X = 0)`.
    pub fn intervals(&self) -> Option<Vec<(f64, f64)>> {
        (self.grid.num_states == 2).then(|| {
            let r = self.grid.resolution as f64;
            self.runs()
                .into_iter()
                .map(|(a, b)| (a as f64 / r, b as f64 / r))
                .collect()
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(coordinate_header(self.grid.num_states, None))?;
        for (i, p) in self.grid.points().iter().enumerate() {
            let mut rec: Vec<String> = p.probs().iter().map(|v| v.to_string()).collect();
            rec.push(u8::from(self.members[i]).to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf8")
    }

    /// Parses a region table written by [`Region::write_csv`], rebuilding
    /// its grid from the row count.
    pub fn read_csv<R: Read>(input: R) -> Result<Region> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.clone();
        let num_states = header
            .len()
            .checked_sub(1)
            .filter(|&n| n >= 2)
            .ok_or_else(|| {
                Error::Parse("region table needs at least two coordinate columns".into())
            })?;
        let rows: Vec<(Vec<f64>, bool)> = rdr
            .records()
            .map(|rec| parse_region_row(&rec?, 0, num_states))
            .collect::<Result<_>>()?;
        region_from_rows(num_states, &rows)
    }

    /// Parses a region table with a leading `label` column into one region
    /// per label, in order of first appearance.
    pub fn read_stacked_csv<R: Read>(input: R) -> Result<Vec<(String, Region)>> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.clone();
        if header.get(0) != Some("label") {
            return Err(Error::Parse(
                "stacked region table must start with a label column".into(),
            ));
        }
        let num_states = header
            .len()
            .checked_sub(2)
            .filter(|&n| n >= 2)
            .ok_or_else(|| {
                Error::Parse("region table needs at least two coordinate columns".into())
            })?;
        let mut groups: Vec<(String, Vec<Row>)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let label = rec.get(0).unwrap_or_default().to_string();
            let row = parse_region_row(&rec, 1, num_states)?;
            match groups.last_mut() {
                Some((l, rows)) if *l == label => rows.push(row),
                _ => groups.push((label, vec![row])),
            }
        }
        groups
            .into_iter()
            .map(|(label, rows)| Ok((label, region_from_rows(num_states, &rows)?)))
            .collect()
    }
}

/// Writes several labelled regions on one table, one block per region.
pub fn write_stacked_csv<W: Write>(regions: &[(String, Region)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some((_, first)) = regions.first() else {
        return Ok(());
    };
    w.write_record(coordinate_header(first.grid.num_states, Some("label")))?;
    for (label, region) in regions {
        for (i, p) in region.grid.points().iter().enumerate() {
            let mut rec = vec![label.clone()];
            rec.extend(p.probs().iter().map(|v| v.to_string()));
            rec.push(u8::from(region.members[i]).to_string());
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}

pub(crate) fn coordinate_header(num_states: usize, lead: Option<&str>) -> Vec<String> {
    lead.map(str::to_string)
        .into_iter()
        .chain((0..num_states).map(|i| format!("pi_{i}")))
        .chain(std::iter::once("member".to_string()))
        .collect()
}

/// Coordinates and membership bit of one table row.
type Row = (Vec<f64>, bool);

fn parse_region_row(rec: &csv::StringRecord, offset: usize, num_states: usize) -> Result<Row> {
    let coords = (0..num_states)
        .map(|i| {
            rec.get(offset + i)
                .ok_or_else(|| Error::Parse("short row".into()))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(e.to_string()))
        })
        .collect::<Result<Vec<f64>>>()?;
    let member = match rec.get(offset + num_states).map(str::trim) {
        Some("1") => true,
        Some("0") => false,
        other => {
            return Err(Error::Parse(format!(
                "membership must be 0 or 1, got {other:?}"
            )))
        }
    };
    Ok((coords, member))
}

fn region_from_rows(num_states: usize, rows: &[(Vec<f64>, bool)]) -> Result<Region> {
    let mut resolution = 1u32;
    while lattice_size(num_states, resolution) < rows.len() as u128 {
        resolution += 1;
    }
    if lattice_size(num_states, resolution) != rows.len() as u128 {
        return Err(Error::Parse(format!(
            "{} rows do not form a complete {num_states}-state grid",
            rows.len()
        )));
    }
    let grid = SimplexGrid::build(num_states, resolution)?;
    let mut seen = vec![false; grid.len()];
    let mut members = vec![false; grid.len()];
    let r = resolution as f64;
    for (coords, member) in rows {
        let lattice: Vec<u32> = coords
            .iter()
            .map(|c| (c * r).round().max(0.0) as u32)
            .collect();
        let idx = grid
            .index_of(&lattice)
            .ok_or_else(|| Error::Parse(format!("{coords:?} is not a grid point")))?;
        if std::mem::replace(&mut seen[idx], true) {
            return Err(Error::Parse(format!("grid point {coords:?} listed twice")));
        }
        members[idx] = *member;
    }
    Ok(Region::from_mask(&grid, members))
}

impl Serialize for Region {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            num_states: usize,
            resolution: u32,
            size: usize,
            members: Vec<usize>,
            #[serde(skip_serializing_if = "Option::is_none")]
            intervals: Option<Vec<(f64, f64)>>,
        }
        Repr {
            num_states: self.grid.num_states,
            resolution: self.grid.resolution,
            size: self.len(),
            members: self.indices().collect(),
            intervals: self.intervals(),
        }
        .serialize(s)
    }
}

/// Whether cooperation is still intact (`S_t`). Once a deviation has been
/// observed the flag stays at `Deviated` forever.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum SharingFlag {
    Deviated,
    Cooperating,
}

impl SharingFlag {
    pub fn bit(self) -> u8 {
        match self {
            SharingFlag::Deviated => 0,
            SharingFlag::Cooperating => 1,
        }
    }

    pub fn from_bit(bit: u8) -> Option<SharingFlag> {
        match bit {
            0 => Some(SharingFlag::Deviated),
            1 => Some(SharingFlag::Cooperating),
            _ => None,
        }
    }

    pub fn is_cooperating(self) -> bool {
        self == SharingFlag::Cooperating
    }
}

/// Next flag value: stays 1 only if it was 1 and both agents shared.
pub fn flag_update(s: SharingFlag, a1: Action, a2: Action) -> SharingFlag {
    if s.is_cooperating() && a1.is_share() && a2.is_share() {
        SharingFlag::Cooperating
    } else {
        SharingFlag::Deviated
    }
}

/// CGT policy: share iff cooperation is intact and the belief lies in the
/// agent's own cooperation region.
pub fn cgt_action(s: SharingFlag, belief: &Belief, own_region: &Region) -> Result<Action> {
    let inside = own_region.contains(belief)?;
    Ok(if s.is_cooperating() && inside {
        Action::Share
    } else {
        Action::Defect
    })
}

/// Same as [`cgt_action`] for a belief already known to sit on grid point `index`.
pub fn cgt_action_at(s: SharingFlag, index: usize, own_region: &Region) -> Action {
    if s.is_cooperating() && own_region.contains_index(index) {
        Action::Share
    } else {
        Action::Defect
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_grids() {
        let g = SimplexGrid::build(2, 4).unwrap();
        let pts: Vec<Vec<f64>> = g.points().iter().map(|b| b.probs().to_vec()).collect();
        assert_eq!(
            pts,
            vec![
                vec![0.0, 1.0],
                vec![0.25, 0.75],
                vec![0.5, 0.5],
                vec![0.75, 0.25],
                vec![1.0, 0.0]
            ]
        );
        assert_eq!(SimplexGrid::build(2, 200).unwrap().len(), 201);
        assert_eq!(SimplexGrid::build(3, 2).unwrap().len(), 6);
        assert_eq!(lattice_size(4, 10), 286);
        assert!(matches!(
            SimplexGrid::build_with_cap(3, 100, 1000),
            Err(Error::ResolutionTooLarge { points: 5151, .. })
        ));
    }

    #[test]
    fn nearest_point_rounding() {
        let g = SimplexGrid::build(2, 4).unwrap();
        assert_eq!(g.nearest(&Belief::binary(0.3).unwrap()).unwrap(), 1);
        assert_eq!(g.nearest(&Belief::binary(0.49).unwrap()).unwrap(), 2);
        // Exactly halfway between 0.25 and 0.5: smaller index wins.
        assert_eq!(g.nearest(&Belief::binary(0.375).unwrap()).unwrap(), 1);
        assert!(g.nearest(&Belief::uniform(3)).is_err());
        let g3 = SimplexGrid::build(3, 10).unwrap();
        for (i, p) in g3.points().iter().enumerate() {
            assert_eq!(g3.nearest(p).unwrap(), i);
        }
    }

    #[test]
    fn flag_dynamics() {
        use Action::*;
        use SharingFlag::*;
        assert_eq!(flag_update(Cooperating, Share, Share), Cooperating);
        assert_eq!(flag_update(Cooperating, Defect, Share), Deviated);
        assert_eq!(flag_update(Deviated, Share, Share), Deviated);
    }

    #[test]
    fn cgt_policy() {
        let g = SimplexGrid::build(2, 20).unwrap();
        let band = Region::from_predicate(&g, |b| (0.15..=0.8).contains(&b[0]));
        let inside = Belief::binary(0.5).unwrap();
        let outside = Belief::binary(0.9).unwrap();
        assert_eq!(
            cgt_action(SharingFlag::Cooperating, &inside, &band).unwrap(),
            Action::Share
        );
        assert_eq!(
            cgt_action(SharingFlag::Deviated, &inside, &band).unwrap(),
            Action::Defect
        );
        assert_eq!(
            cgt_action(SharingFlag::Cooperating, &outside, &band).unwrap(),
            Action::Defect
        );
        assert!(matches!(
            cgt_action(SharingFlag::Cooperating, &Belief::uniform(3), &band),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn region_basics() {
        let g = SimplexGrid::build(2, 20).unwrap();
        let band = Region::from_predicate(&g, |b| (0.15..=0.8).contains(&b[0]));
        let full = Region::full(&g);
        let empty = Region::empty(&g);
        assert_eq!(band.union(&empty).unwrap(), band);
        assert!(band.is_subset(&band).unwrap());
        assert_eq!(band.intersection(&full).unwrap(), band);
        assert_eq!(band.runs(), vec![(3, 16)]);
        assert_eq!(band.intervals().unwrap(), vec![(0.15, 0.8)]);
        let other = Region::full(&SimplexGrid::build(2, 10).unwrap());
        assert!(matches!(band.union(&other), Err(Error::GridMismatch(_))));
        assert!(Region::from_indices(&g, [21]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let g = SimplexGrid::build(3, 6).unwrap();
        let r = Region::from_indices(&g, [0, 3, 7, 27]).unwrap();
        let text = r.to_csv_string();
        assert!(text.starts_with("pi_0,pi_1,pi_2,member\n0,0,1,1\n"));
        assert_eq!(Region::read_csv(text.as_bytes()).unwrap(), r);

        let g2 = SimplexGrid::build(2, 8).unwrap();
        let a = Region::from_indices(&g2, [1, 2, 3]).unwrap();
        let b = Region::full(&g2);
        let mut buf = Vec::new();
        write_stacked_csv(
            &[("a".into(), a.clone()), ("b".into(), b.clone())],
            &mut buf,
        )
        .unwrap();
        let back = Region::read_stacked_csv(buf.as_slice()).unwrap();
        assert_eq!(back, vec![("a".to_string(), a), ("b".to_string(), b)]);
    }

    #[test]
    fn csv_rejects_bad_tables() {
        assert!(Region::read_csv("pi_0,pi_1,member\n0,1,2\n".as_bytes()).is_err());
        assert!(Region::read_csv("pi_0,pi_1,member\n0,1,1\n0,1,0\n".as_bytes()).is_err());
        assert!(
            Region::read_csv("pi_0,pi_1,member\n0,1,1\n0.5,0.5,0\n0.5,0.5,1\n".as_bytes()).is_err()
        );
    }

    fn arb_region(grid: Arc<SimplexGrid>) -> impl Strategy<Value = Region> {
        proptest::collection::vec(any::<bool>(), grid.len())
            .prop_map(move |mask| Region::from_mask(&grid, mask))
    }

    proptest! {
        #[test]
        fn lattice_laws(
            (a, b, c) in {
                let g = SimplexGrid::build(3, 5).unwrap();
                (arb_region(g.clone()), arb_region(g.clone()), arb_region(g))
            }
        ) {
            let ab_c = a.union(&b).unwrap().union(&c).unwrap();
            let a_bc = a.union(&b.union(&c).unwrap()).unwrap();
            prop_assert_eq!(ab_c, a_bc);
            let ab_c = a.intersection(&b).unwrap().intersection(&c).unwrap();
            let a_bc = a.intersection(&b.intersection(&c).unwrap()).unwrap();
            prop_assert_eq!(ab_c, a_bc);
            prop_assert_eq!(a.union(&a.intersection(&b).unwrap()).unwrap(), a.clone());
            prop_assert_eq!(a.intersection(&a.union(&b).unwrap()).unwrap(), a.clone());
            prop_assert!(a.difference(&b).unwrap().is_subset(&a).unwrap());
            prop_assert!(a.intersection(&b).unwrap().is_subset(&a.union(&b).unwrap()).unwrap());
        }

        #[test]
        fn flag_absorbs(bits in proptest::collection::vec((0u8..2, 0u8..2), 1..50)) {
            let mut s = SharingFlag::Cooperating;
            let mut dropped = false;
            for (a1, a2) in bits {
                s = flag_update(s, Action::from_bit(a1).unwrap(), Action::from_bit(a2).unwrap());
                if dropped {
                    prop_assert_eq!(s, SharingFlag::Deviated);
                }
                dropped |= s == SharingFlag::Deviated;
            }
        }

        #[test]
        fn action_depends_on_rounded_point(p in 0.0f64..1.0, jitter in -0.0024f64..0.0024) {
            let g = SimplexGrid::build(2, 200).unwrap();
            let region = Region::from_predicate(&g, |b| ((b[0] * 200.0).round() as u32).is_multiple_of(3));
            let b1 = Belief::binary(p).unwrap();
            let q = (p + jitter).clamp(0.0, 1.0);
            let b2 = Belief::binary(q).unwrap();
            if g.nearest(&b1).unwrap() == g.nearest(&b2).unwrap() {
                prop_assert_eq!(
                    cgt_action(SharingFlag::Cooperating, &b1, &region).unwrap(),
                    cgt_action(SharingFlag::Cooperating, &b2, &region).unwrap()
                );
            }
        }
    }
}
