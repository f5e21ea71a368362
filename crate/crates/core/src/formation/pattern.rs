//! Periodic threshold tiles.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Seed of the fixed cell permutation used by [`make_hdr_pattern`].
const HDR_PLACEMENT_SEED: u64 = 0x4844_5231;

/// A `tile_h x tile_w` tile of integer thresholds repeated over the sensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThresholdPattern {
    tile_h: usize,
    tile_w: usize,
    thresholds: Vec<u32>,
}

impl ThresholdPattern {
    /// `thresholds` is the tile in row-major order.
    pub fn new(tile_h: usize, tile_w: usize, thresholds: Vec<u32>) -> Result<Self> {
        if tile_h == 0 || tile_w == 0 {
            return Err(Error::invalid("threshold tile must be at least 1x1"));
        }
        if thresholds.len() != tile_h * tile_w {
            return Err(Error::invalid(format!(
                "tile {tile_h}x{tile_w} needs {} thresholds, got {}",
                tile_h * tile_w,
                thresholds.len()
            )));
        }
        if thresholds.contains(&0) {
            return Err(Error::invalid("thresholds must be >= 1"));
        }
        Ok(ThresholdPattern {
            tile_h,
            tile_w,
            thresholds,
        })
    }

    /// Every pixel compares against `q`.
    pub fn constant(q: u32) -> Result<Self> {
        Self::new(1, 1, vec![q])
    }

    pub fn tile_h(&self) -> usize {
        self.tile_h
    }

    pub fn tile_w(&self) -> usize {
        self.tile_w
    }

    pub fn thresholds(&self) -> &[u32] {
        &self.thresholds
    }

    pub fn threshold_at(&self, row: usize, col: usize) -> u32 {
        self.thresholds[(row % self.tile_h) * self.tile_w + col % self.tile_w]
    }

    /// Per-pixel threshold map for a `height x width` sensor.
    pub fn expand(&self, height: usize, width: usize) -> Array2<u32> {
        Array2::from_shape_fn((height, width), |(i, j)| self.threshold_at(i, j))
    }

    /// Reads the tile back from an expanded map, checking exact periodicity.
    pub fn from_map(map: &Array2<u32>, tile_h: usize, tile_w: usize) -> Result<Self> {
        let (h, w) = map.dim();
        if h < tile_h || w < tile_w {
            return Err(Error::invalid("threshold map smaller than tile"));
        }
        let tile: Vec<u32> = (0..tile_h)
            .flat_map(|i| (0..tile_w).map(move |j| (i, j)))
            .map(|(i, j)| map[[i, j]])
            .collect();
        let pattern = Self::new(tile_h, tile_w, tile)?;
        if pattern.expand(h, w) != *map {
            return Err(Error::invalid("threshold map is not periodic in the given tile"));
        }
        Ok(pattern)
    }

    /// Plain text form: `tile_h tile_w` on the first line, then rows of integers.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.tile_h, self.tile_w);
        for row in self.thresholds.chunks(self.tile_w) {
            let line: Vec<String> = row.iter().map(|q| q.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let mut next_num = |what: &str| -> Result<u64> {
            let tok = tokens
                .next()
                .ok_or_else(|| Error::Malformed(format!("pattern file: missing {what}")))?;
            tok.parse::<u64>()
                .map_err(|_| Error::Malformed(format!("pattern file: bad {what} '{tok}'")))
        };
        let tile_h = next_num("tile_h")? as usize;
        let tile_w = next_num("tile_w")? as usize;
        let mut values = Vec::with_capacity(tile_h * tile_w);
        for _ in 0..tile_h * tile_w {
            let q = next_num("threshold")?;
            values.push(u32::try_from(q).map_err(|_| Error::Malformed("threshold too large".into()))?);
        }
        if tokens.next().is_some() {
            return Err(Error::Malformed("pattern file: trailing data".into()));
        }
        Self::new(tile_h, tile_w, values)
    }
}

/// Tile holding every level in `q_min..=q_max` as evenly as possible, each level
/// appearing `floor(cells/levels)` or `ceil(cells/levels)` times (lower levels
/// take the extra cells), placed by a seeded permutation.
pub fn make_uniform_pattern(
    tile_w: usize,
    tile_h: usize,
    q_min: u32,
    q_max: u32,
    seed: u64,
) -> Result<ThresholdPattern> {
    if q_min == 0 || q_max < q_min {
        return Err(Error::invalid(format!(
            "threshold range must satisfy 1 <= q_min <= q_max, got {q_min}..{q_max}"
        )));
    }
    let cells = tile_w * tile_h;
    let levels = (q_max - q_min + 1) as usize;
    if cells < levels {
        return Err(Error::TileTooSmall {
            tile_h,
            tile_w,
            required: levels,
        });
    }
    let base = cells / levels;
    let extra = cells % levels;
    let mut values = Vec::with_capacity(cells);
    for (i, q) in (q_min..=q_max).enumerate() {
        let n = base + usize::from(i < extra);
        values.extend(std::iter::repeat_n(q, n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    values.shuffle(&mut rng);
    ThresholdPattern::new(tile_h, tile_w, values)
}

/// Thresholds whose informative intervals `[q - 2√q, q + 2√q]` chain from
/// `q = 1` until the range `[0, lambda_max]` is covered.
pub fn covering_thresholds(lambda_max: f64) -> Vec<u32> {
    let mut q: u64 = 1;
    let mut out = vec![1u32];
    while (q as f64) + 2.0 * (q as f64).sqrt() < lambda_max {
        let reach = q as f64 + 2.0 * (q as f64).sqrt();
        // largest n with n - 2√n <= reach, i.e. √n <= 1 + √(1 + reach)
        let root = 1.0 + (1.0 + reach).sqrt();
        let mut next = (root * root).floor() as u64;
        while next as f64 - 2.0 * (next as f64).sqrt() > reach {
            next -= 1;
        }
        q = next.max(q + 1);
        out.push(q as u32);
    }
    out
}

/// Square tile for high dynamic range scenes: the covering thresholds for
/// `[0, lambda_max]`, with spare cells filled from the covering of the lowest
/// decade `[0, lambda_max / 10]`.
pub fn make_hdr_pattern(lambda_max: f64, tile_side: usize) -> Result<ThresholdPattern> {
    if !(lambda_max > 0.0) || !lambda_max.is_finite() {
        return Err(Error::invalid(format!("lambda_max must be positive, got {lambda_max}")));
    }
    let mut values = covering_thresholds(lambda_max);
    let cells = tile_side * tile_side;
    if tile_side == 0 || cells < values.len() {
        return Err(Error::TileTooSmall {
            tile_h: tile_side,
            tile_w: tile_side,
            required: values.len(),
        });
    }
    let surplus = cells - values.len();
    if surplus > 0 {
        let low = covering_thresholds(lambda_max / 10.0);
        values.extend((0..surplus).map(|i| low[i * low.len() / surplus]));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(HDR_PLACEMENT_SEED);
    values.shuffle(&mut rng);
    ThresholdPattern::new(tile_side, tile_side, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn histogram(p: &ThresholdPattern) -> std::collections::BTreeMap<u32, usize> {
        let mut h = std::collections::BTreeMap::new();
        for &q in p.thresholds() {
            *h.entry(q).or_default() += 1;
        }
        h
    }

    #[test]
    fn three_by_three_holds_each_level_once() {
        let p = make_uniform_pattern(3, 3, 1, 9, 7).unwrap();
        let h = histogram(&p);
        assert_eq!(h.len(), 9);
        assert!(h.values().all(|&n| n == 1));
    }

    #[test]
    fn five_by_five_counts() {
        let p = make_uniform_pattern(5, 5, 1, 10, 1).unwrap();
        let h = histogram(&p);
        let threes = h.values().filter(|&&n| n == 3).count();
        let twos = h.values().filter(|&&n| n == 2).count();
        assert_eq!((threes, twos), (5, 5));
    }

    #[test]
    fn one_by_one() {
        let p = make_uniform_pattern(1, 1, 1, 1, 0).unwrap();
        assert_eq!(p.thresholds(), &[1]);
    }

    #[test]
    fn tile_too_small() {
        assert!(matches!(
            make_uniform_pattern(2, 2, 1, 5, 0),
            Err(Error::TileTooSmall { required: 5, .. })
        ));
    }

    #[test]
    fn seeded_placement_is_deterministic() {
        let a = make_uniform_pattern(5, 5, 1, 10, 42).unwrap();
        let b = make_uniform_pattern(5, 5, 1, 10, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hdr_covering_count() {
        let cover = covering_thresholds(1e5);
        assert!((150..=165).contains(&cover.len()), "{}", cover.len());
        for pair in cover.windows(2) {
            let (a, b) = (pair[0] as f64, pair[1] as f64);
            assert!(b - 2.0 * b.sqrt() <= a + 2.0 * a.sqrt());
            assert!(b > a);
        }
        let last = *cover.last().unwrap() as f64;
        assert!(last + 2.0 * last.sqrt() >= 1e5);
    }

    #[test]
    fn hdr_tile_thirteen() {
        let p = make_hdr_pattern(1e5, 13).unwrap();
        assert_eq!(p.thresholds().len(), 169);
        let cover = covering_thresholds(1e5);
        let mut sorted = p.thresholds().to_vec();
        sorted.sort_unstable();
        // every covering threshold is present
        for q in &cover {
            assert!(sorted.binary_search(q).is_ok());
        }
        let surplus = 169 - cover.len();
        let low: Vec<u32> = covering_thresholds(1e4);
        let low_max = *low.last().unwrap();
        let mut counts = histogram(&p);
        for q in &cover {
            *counts.get_mut(q).unwrap() -= 1;
        }
        let extra: usize = counts.iter().filter(|(&q, _)| q <= low_max).map(|(_, &n)| n).sum();
        assert_eq!(extra, surplus);
    }

    #[test]
    fn hdr_unit_range() {
        let p = make_hdr_pattern(1.0, 1).unwrap();
        assert_eq!(p.thresholds(), &[1]);
    }

    #[test]
    fn hdr_reports_minimum() {
        match make_hdr_pattern(1e5, 12) {
            Err(Error::TileTooSmall { required, .. }) => {
                assert_eq!(required, covering_thresholds(1e5).len())
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn text_round_trip() {
        let p = make_uniform_pattern(5, 3, 2, 9, 3).unwrap();
        let back = ThresholdPattern::from_text(&p.to_text()).unwrap();
        assert_eq!(p, back);
        assert!(ThresholdPattern::from_text("2 2\n1 2 3").is_err());
        assert!(ThresholdPattern::from_text("1 1\n0").is_err());
    }

    proptest! {
        #[test]
        fn tiling_is_periodic(th in 1usize..6, tw in 1usize..6, seed in any::<u64>(), reps in 1usize..4) {
            let levels = (th * tw).min(7) as u32;
            let p = make_uniform_pattern(tw, th, 1, levels, seed).unwrap();
            let map = p.expand(th * reps + 1, tw * reps + 2);
            for ((i, j), &q) in map.indexed_iter() {
                prop_assert_eq!(q, map[[i % th, j % tw]]);
            }
            let back = ThresholdPattern::from_map(&map, th, tw).unwrap();
            prop_assert_eq!(back, p);
        }
    }
}
