//! Square Gray-mapped QAM.
//!
//! A label of `k = log2(order)` bits is split in half, MSB first: the first
//! `k/2` bits select the in-phase level and the rest the quadrature level.
//! Each half is Gray-decoded to a position `g` on a `sqrt(order)`-level PAM
//! axis and placed at `(sqrt(order) - 1) - 2g`, so all-zero bits land on the
//! top-right corner. Points are scaled to unit average energy.
//!
//! | order | bits `00..`      | example              |
//! |-------|------------------|----------------------|
//! | 4     | `00`             | `(1 + j) / sqrt(2)`  |
//! | 16    | `0000`           | `(3 + 3j) / sqrt(10)`|
//! | 64    | `000000`         | `(7 + 7j) / sqrt(42)`|

use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::numerics::ComplexVector;

#[derive(Debug, Clone, PartialEq)]
pub struct QamConstellation {
    order: usize,
    bits_per_symbol: usize,
    levels: usize,
    scale: f64,
    /// `points[label]` is the symbol carrying bit label `label`.
    points: Vec<Complex64>,
}

fn gray_decode(mut g: usize) -> usize {
    let mut b = g;
    while g > 0 {
        g >>= 1;
        b ^= g;
    }
    b
}

fn gray_encode(b: usize) -> usize {
    b ^ (b >> 1)
}

impl QamConstellation {
    pub fn new(order: usize) -> Result<Self> {
        if !matches!(order, 4 | 16 | 64) {
            return Err(invalid(format!(
                "unsupported QAM order {order}; expected 4, 16 or 64"
            )));
        }
        let bits_per_symbol = order.trailing_zeros() as usize;
        let half = bits_per_symbol / 2;
        let levels = 1usize << half;
        let scale = (2.0 * (order as f64 - 1.0) / 3.0).sqrt();
        let mask = levels - 1;
        let points = (0..order)
            .map(|label| {
                let gi = gray_decode(label >> half);
                let gq = gray_decode(label & mask);
                Complex64::new(
                    ((levels - 1) as f64 - 2.0 * gi as f64) / scale,
                    ((levels - 1) as f64 - 2.0 * gq as f64) / scale,
                )
            })
            .collect();
        Ok(Self {
            order,
            bits_per_symbol,
            levels,
            scale,
            points,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// Largest |real| (= largest |imag|) over the constellation.
    pub fn max_component(&self) -> f64 {
        (self.levels - 1) as f64 / self.scale
    }

    /// Minimum distance between two points.
    pub fn min_distance(&self) -> f64 {
        2.0 / self.scale
    }

    /// Corner point for quadrant `q mod 4` (counter-clockwise from `+,+`).
    pub fn corner(&self, q: usize) -> Complex64 {
        let a = self.max_component();
        match q % 4 {
            0 => Complex64::new(a, a),
            1 => Complex64::new(-a, a),
            2 => Complex64::new(-a, -a),
            _ => Complex64::new(a, -a),
        }
    }

    /// Label of the Euclidean-nearest point. Square grids decouple into two
    /// independent PAM slicers.
    pub fn nearest_label(&self, z: Complex64) -> usize {
        let half = self.bits_per_symbol / 2;
        let gi = self.slice_axis(z.re);
        let gq = self.slice_axis(z.im);
        (gray_encode(gi) << half) | gray_encode(gq)
    }

    pub fn nearest_point(&self, z: Complex64) -> Complex64 {
        self.points[self.nearest_label(z)]
    }

    fn slice_axis(&self, x: f64) -> usize {
        let top = (self.levels - 1) as f64;
        // position g sits at (top - 2g)/scale
        let g = ((top - x * self.scale) / 2.0).round();
        if g.is_nan() {
            return 0;
        }
        g.clamp(0.0, top) as usize
    }

    pub fn label_to_bits(&self, label: usize, out: &mut Vec<u8>) {
        for b in (0..self.bits_per_symbol).rev() {
            out.push(((label >> b) & 1) as u8);
        }
    }

    fn bits_to_label(&self, bits: &[u8]) -> Result<usize> {
        let mut label = 0;
        for &b in bits {
            if b > 1 {
                return Err(invalid(format!("bit value {b} is not 0 or 1")));
            }
            label = (label << 1) | b as usize;
        }
        Ok(label)
    }
}

/// Maps each group of `log2(order)` bits to its Gray-labelled point.
pub fn qam_modulate(bits: &[u8], c: &QamConstellation) -> Result<ComplexVector> {
    let k = c.bits_per_symbol();
    if bits.is_empty() || bits.len() % k != 0 {
        return Err(invalid(format!(
            "bit count {} is not a positive multiple of {k}",
            bits.len()
        )));
    }
    let symbols = bits
        .chunks(k)
        .map(|chunk| c.bits_to_label(chunk).map(|label| c.points[label]))
        .collect::<Result<Vec<_>>>()?;
    Ok(ComplexVector::from_vec_unchecked(symbols))
}

/// Hard decision: bit label of the nearest constellation point per symbol.
pub fn qam_demodulate_hard(symbols: &[Complex64], c: &QamConstellation) -> Vec<u8> {
    let mut bits = Vec::with_capacity(symbols.len() * c.bits_per_symbol());
    for &z in symbols {
        c.label_to_bits(c.nearest_label(z), &mut bits);
    }
    bits
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SimRng;

    fn brute_force_label(c: &QamConstellation, z: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (label, p) in c.points().iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = label;
            }
        }
        best
    }

    #[test]
    fn qpsk_zero_bits_top_right() {
        let c = QamConstellation::new(4).unwrap();
        let s = qam_modulate(&[0, 0], &c).unwrap();
        let want = Complex64::new(1.0, 1.0) / 2f64.sqrt();
        assert!((s[0] - want).norm() < 1e-15);
    }

    #[test]
    fn unit_average_power() {
        for order in [4, 16, 64] {
            let c = QamConstellation::new(order).unwrap();
            let p: f64 = c.points().iter().map(|z| z.norm_sqr()).sum::<f64>() / order as f64;
            assert!((p - 1.0).abs() < 1e-12, "order {order}: {p}");
        }
    }

    #[test]
    fn gray_adjacency() {
        for order in [4, 16, 64] {
            let c = QamConstellation::new(order).unwrap();
            let dmin = c.min_distance();
            for (a, pa) in c.points().iter().enumerate() {
                for (b, pb) in c.points().iter().enumerate() {
                    if a != b && ((pa - pb).norm() - dmin).abs() < 1e-9 {
                        assert_eq!((a ^ b).count_ones(), 1, "order {order}: {a:b} vs {b:b}");
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_ragged_bits_and_bad_order() {
        let c = QamConstellation::new(16).unwrap();
        assert!(qam_modulate(&[0, 1, 1], &c).is_err());
        assert!(qam_modulate(&[], &c).is_err());
        assert!(qam_modulate(&[0, 1, 2, 0], &c).is_err());
        assert!(QamConstellation::new(8).is_err());
    }

    #[test]
    fn round_trip_random_blocks() {
        let mut rng = SimRng::new(4);
        for order in [4, 16, 64] {
            let c = QamConstellation::new(order).unwrap();
            for _ in 0..10_000 / 3 {
                let bits: Vec<u8> = (0..c.bits_per_symbol() * 4).map(|_| rng.bit()).collect();
                let s = qam_modulate(&bits, &c).unwrap();
                assert_eq!(qam_demodulate_hard(&s, &c), bits);
            }
        }
    }

    #[test]
    fn small_perturbation_keeps_decision() {
        let c = QamConstellation::new(16).unwrap();
        for (label, &p) in c.points().iter().enumerate() {
            let z = p + Complex64::new(1e-6, -1e-6);
            assert_eq!(c.nearest_label(z), label);
        }
    }

    #[test]
    fn slicer_matches_exhaustive_search() {
        let mut rng = SimRng::new(17);
        for order in [4, 16, 64] {
            let c = QamConstellation::new(order).unwrap();
            for _ in 0..5000 {
                let z = Complex64::new(rng.uniform() * 3.0 - 1.5, rng.uniform() * 3.0 - 1.5);
                assert_eq!(c.nearest_label(z), brute_force_label(&c, z));
            }
        }
    }

    #[test]
    fn corners_are_constellation_points() {
        let c = QamConstellation::new(16).unwrap();
        for q in 0..4 {
            let z = c.corner(q);
            assert!((c.nearest_point(z) - z).norm() < 1e-12);
            assert!((z.norm_sqr() - 1.8).abs() < 1e-12);
        }
    }
}
