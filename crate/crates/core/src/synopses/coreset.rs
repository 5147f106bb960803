//! Merge-and-reduce coreset for k-means.
//!
//! Level 0 buffers raw points. A full buffer moves up as a bucket; two buckets
//! on the same level are reduced to one of `bucketSize` weighted points by D^2
//! sampling of representatives and nearest-representative aggregation, and the
//! result carries to the next level.
//!
//! Payload: `u32 m, u32 d, u64 reduce_counter, points(buffer), u32 levels,
//! {u8 present, [points]}*` where `points = u32 count, {f64 weight, d f64}*`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::{check, Reader, Writer};
use crate::error::{Result, SdeError};
use crate::hash::derive_seeds;
use crate::model::Params;

use super::WeightedPoint;

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Weighted k-means cost of `points` against `centers`.
pub fn kmeans_cost(points: &[WeightedPoint], centers: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .map(|p| {
            p.weight
                * centers
                    .iter()
                    .map(|c| dist2(&p.coords, c))
                    .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoreSetTree {
    m: usize,
    d: usize,
    seed: u64,
    reduce_counter: u64,
    buffer: Vec<WeightedPoint>,
    levels: Vec<Option<Vec<WeightedPoint>>>,
}

impl CoreSetTree {
    /// `bucketSize` m and `dimensions` d.
    pub fn from_params(params: &Params, seed: u64) -> Result<Self> {
        let m = params.u64("bucketSize")? as usize;
        if !(2..=100_000).contains(&m) {
            return Err(SdeError::param("bucketSize", "must lie in [2, 100000]"));
        }
        let d = params.u64("dimensions")? as usize;
        if !(1..=1024).contains(&d) {
            return Err(SdeError::param("dimensions", "must lie in [1, 1024]"));
        }
        Ok(CoreSetTree {
            m,
            d,
            seed,
            reduce_counter: 0,
            buffer: Vec::new(),
            levels: Vec::new(),
        })
    }

    pub fn bucket_size(&self) -> usize {
        self.m
    }

    pub fn add(&mut self, point: &[f64]) -> Result<()> {
        if point.len() != self.d {
            return Err(SdeError::Record(format!(
                "point has {} coordinates, expected {}",
                point.len(),
                self.d
            )));
        }
        if point.iter().any(|x| !x.is_finite()) {
            return Err(SdeError::Record("point is not finite".into()));
        }
        self.push(WeightedPoint {
            weight: 1.0,
            coords: point.to_vec(),
        });
        Ok(())
    }

    fn push(&mut self, p: WeightedPoint) {
        self.buffer.push(p);
        if self.buffer.len() == self.m {
            let bucket = std::mem::take(&mut self.buffer);
            self.carry(0, bucket);
        }
    }

    fn carry(&mut self, mut level: usize, mut bucket: Vec<WeightedPoint>) {
        loop {
            if self.levels.len() <= level {
                self.levels.resize(level + 1, None);
            }
            match self.levels[level].take() {
                None => {
                    self.levels[level] = Some(bucket);
                    return;
                }
                Some(mut existing) => {
                    existing.append(&mut bucket);
                    bucket = self.reduce(existing);
                    level += 1;
                }
            }
        }
    }

    fn rng(&mut self) -> ChaCha8Rng {
        self.reduce_counter += 1;
        ChaCha8Rng::seed_from_u64(derive_seeds(self.seed ^ self.reduce_counter, 1)[0])
    }

    /// Reduces a weighted set to at most `m` points.
    fn reduce(&mut self, points: Vec<WeightedPoint>) -> Vec<WeightedPoint> {
        if points.len() <= self.m {
            return points;
        }
        let mut rng = self.rng();
        let mut best = vec![f64::INFINITY; points.len()];
        let mut reps: Vec<usize> = Vec::with_capacity(self.m);
        let weights: Vec<f64> = points.iter().map(|p| p.weight).collect();
        let first = WeightedIndex::new(&weights)
            .map(|w| w.sample(&mut rng))
            .unwrap_or(0);
        reps.push(first);
        while reps.len() < self.m {
            let last = &points[*reps.last().unwrap()].coords;
            for (b, p) in best.iter_mut().zip(&points) {
                *b = b.min(dist2(&p.coords, last));
            }
            let scores: Vec<f64> = best.iter().zip(&weights).map(|(b, w)| b * w).collect();
            match WeightedIndex::new(&scores) {
                Ok(w) => reps.push(w.sample(&mut rng)),
                // All remaining mass sits on chosen representatives.
                Err(_) => break,
            }
        }
        let mut out: Vec<WeightedPoint> = reps
            .iter()
            .map(|&i| WeightedPoint {
                weight: 0.0,
                coords: points[i].coords.clone(),
            })
            .collect();
        for p in &points {
            let (j, _) = out
                .iter()
                .enumerate()
                .map(|(j, r)| (j, dist2(&p.coords, &r.coords)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            out[j].weight += p.weight;
        }
        out.retain(|p| p.weight > 0.0);
        out
    }

    /// At most `m` weighted points summarizing everything absorbed so far.
    pub fn coreset(&self) -> Vec<WeightedPoint> {
        let mut all: Vec<WeightedPoint> = self.buffer.clone();
        for l in self.levels.iter().flatten() {
            all.extend(l.iter().cloned());
        }
        if all.len() <= self.m {
            return all;
        }
        // Reduction at query time must not advance the stored counter.
        let mut scratch = self.clone();
        scratch.reduce(all)
    }

    pub fn merge(&mut self, other: &CoreSetTree) {
        for (level, b) in other.levels.iter().enumerate() {
            if let Some(b) = b {
                self.carry(level, b.clone());
            }
        }
        for p in &other.buffer {
            self.push(p.clone());
        }
    }

    fn write_points(&self, w: &mut Writer, pts: &[WeightedPoint]) {
        w.len(pts.len());
        for p in pts {
            w.f64(p.weight);
            for x in &p.coords {
                w.f64(*x);
            }
        }
    }

    fn read_points(&self, r: &mut Reader) -> Result<Vec<WeightedPoint>> {
        let n = r.len(8 * (self.d + 1))?;
        (0..n)
            .map(|_| {
                let weight = r.f64()?;
                let coords = (0..self.d).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
                Ok(WeightedPoint { weight, coords })
            })
            .collect()
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.u32(self.m as u32);
        w.u32(self.d as u32);
        w.u64(self.reduce_counter);
        self.write_points(w, &self.buffer);
        w.len(self.levels.len());
        for l in &self.levels {
            match l {
                Some(pts) => {
                    w.u8(1);
                    self.write_points(w, pts);
                }
                None => w.u8(0),
            }
        }
    }

    pub(crate) fn decode(&self, r: &mut Reader) -> Result<Self> {
        check(r.u32()? as usize == self.m, "coreset bucket size mismatch")?;
        check(r.u32()? as usize == self.d, "coreset dimension mismatch")?;
        let mut out = self.clone();
        out.reduce_counter = r.u64()?;
        out.buffer = self.read_points(r)?;
        check(out.buffer.len() < self.m, "coreset buffer overfull")?;
        out.levels = (0..r.len(1)?)
            .map(|_| {
                if r.u8()? == 1 {
                    Ok(Some(self.read_points(r)?))
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<_>>()?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tree(m: u64, d: u64) -> CoreSetTree {
        CoreSetTree::from_params(
            &Params::new().with("bucketSize", m).with("dimensions", d),
            42,
        )
        .unwrap()
    }

    #[test]
    fn coreset_never_exceeds_bucket_size_and_keeps_weight() {
        let mut t = tree(10, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 1..=1000 {
            t.add(&[rng.random::<f64>(), rng.random::<f64>()]).unwrap();
            if i % 97 == 0 {
                let c = t.coreset();
                assert!(c.len() <= 10);
                let w: f64 = c.iter().map(|p| p.weight).sum();
                assert!((w - i as f64).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn separated_clusters_are_recovered() {
        let mut t = tree(20, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let centers = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
        for i in 0..3000 {
            let c = centers[i % 3];
            t.add(&[c[0] + rng.random::<f64>(), c[1] + rng.random::<f64>()])
                .unwrap();
        }
        let cs = t.coreset();
        for c in centers {
            let w: f64 = cs
                .iter()
                .filter(|p| dist2(&p.coords, &[c[0] + 0.5, c[1] + 0.5]) < 4.0)
                .map(|p| p.weight)
                .sum();
            assert!((w - 1000.0).abs() < 1e-6, "cluster weight {w}");
        }
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        let mut t = tree(4, 3);
        assert!(t.add(&[1.0, 2.0]).is_err());
    }
}
