//! Compiling real-valued weight matrices onto stacked ternary crossbars.
//!
//! A weight matrix (rows = inputs, columns = outputs) is quantized to
//! integers in `[-L_w, L_w]` with one per-tensor scale, each integer is split
//! into `bits - 1` signed binary digits, and every digit plane is tiled onto
//! crossbars of at most `tile.max_rows x tile.max_cols` pairs. The forward
//! pass runs DAC -> analog product -> ADC per tile, applies the correction
//! factor, sums row blocks, shift-adds bit levels and removes the scales.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convert::{ConverterSpec, SaturationTally};
use crate::crossbar::{CrossbarTile, TileLimits};
use crate::device::{program_cell, read_current_unchecked, CellLevel, DeviceModelParams};
use crate::error::{Error, Result};
use crate::rng::child_rng;

/// Symmetric per-tensor quantization with a fixed zero point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantScheme {
    pub bits: u32,
    /// Real value of one integer level.
    pub scale: f64,
}

impl QuantScheme {
    pub fn new(bits: u32, scale: f64) -> Result<Self> {
        if !(2..=8).contains(&bits) {
            return Err(Error::Precondition(format!("weight bits must be in 2..=8, got {bits}")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Precondition(format!("scale must be positive, got {scale}")));
        }
        Ok(QuantScheme { bits, scale })
    }

    /// Scale that maps `max_abs` onto the largest level. A zero range falls
    /// back to scale 1.
    pub fn from_max_abs(max_abs: f64, bits: u32) -> Result<Self> {
        let scale = if max_abs > 0.0 {
            max_abs / max_level(bits) as f64
        } else {
            log::warn!("all-zero tensor, using quantization scale 1");
            1.0
        };
        QuantScheme::new(bits, scale)
    }

    pub fn max_level(&self) -> i32 {
        max_level(self.bits)
    }

    /// Multiplier that turns a real weight into level units.
    pub fn weight_factor(&self) -> f64 {
        1.0 / self.scale
    }

    pub fn zero_point(&self) -> i32 {
        0
    }
}

/// `2^(bits-1) - 1`.
pub fn max_level(bits: u32) -> i32 {
    (1 << (bits - 1)) - 1
}

/// Round half away from zero and clamp to the representable levels.
pub fn quantize_weights(weights: &[f64], scheme: &QuantScheme) -> Vec<i32> {
    let l = scheme.max_level();
    weights
        .iter()
        .map(|w| ((w / scheme.scale).round() as i32).clamp(-l, l))
        .collect()
}

/// Significance `2^(bits-2-k)` of bit level `k`.
pub fn level_significance(bits: u32, level: usize) -> i32 {
    1 << (bits as usize - 2 - level)
}

/// Signed binary expansion of `q`: one ternary digit per bit level, most
/// significant first, every nonzero digit carrying the sign of `q`.
pub fn decompose_bits(q: i32, bits: u32) -> Result<Vec<i8>> {
    if !(2..=8).contains(&bits) {
        return Err(Error::Precondition(format!("weight bits must be in 2..=8, got {bits}")));
    }
    let l = max_level(bits);
    if q.abs() > l {
        return Err(Error::LevelOutOfRange { level: q, max_level: l });
    }
    let sign = q.signum() as i8;
    let mag = q.abs();
    Ok((0..(bits - 1) as usize)
        .map(|k| {
            if mag & level_significance(bits, k) != 0 {
                sign
            } else {
                0
            }
        })
        .collect())
}

pub fn compose_bits(digits: &[i8], bits: u32) -> i32 {
    digits
        .iter()
        .enumerate()
        .map(|(k, &d)| d as i32 * level_significance(bits, k))
        .sum()
}

/// One observation for the correction-factor fit: the paired current
/// difference and the normalized product it should represent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectionSample {
    pub target: f64,
    pub diff: f64,
}

/// Draw `count` inputs `x` uniform in [-1, 1]; for each, program fresh pairs
/// for the (high, low), (low, low) and (low, high) configurations and read
/// them at `x * v_read_max`. Targets are `x`, `0` and `-x`.
pub fn collect_correction_samples<R: Rng + ?Sized>(
    params: &DeviceModelParams,
    count: usize,
    rng: &mut R,
) -> Vec<CorrectionSample> {
    use CellLevel::{High, Low};
    let mut samples = Vec::with_capacity(3 * count);
    for _ in 0..count {
        let x: f64 = rng.random_range(-1.0..=1.0);
        let v = x * params.v_read_max;
        for (pos, neg, target) in [(High, Low, x), (Low, Low, 0.0), (Low, High, -x)] {
            let p = program_cell(params, pos, rng);
            let n = program_cell(params, neg, rng);
            let diff = read_current_unchecked(p.g_actual, params, v, rng)
                - read_current_unchecked(n.g_actual, params, v, rng);
            samples.push(CorrectionSample { target, diff });
        }
    }
    samples
}

/// Least-squares `c = sum(t * d) / sum(d^2)`.
pub fn least_squares_correction(samples: &[CorrectionSample]) -> Result<f64> {
    let num: f64 = samples.iter().map(|s| s.target * s.diff).sum();
    let den: f64 = samples.iter().map(|s| s.diff * s.diff).sum();
    let c = num / den;
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::Calibration(format!(
            "no positive least-squares solution (num {num:e}, den {den:e})"
        )));
    }
    Ok(c)
}

/// Correction factor (1/A) minimizing the squared error between corrected
/// paired currents and their normalized targets.
pub fn fit_correction_factor<R: Rng + ?Sized>(
    params: &DeviceModelParams,
    sample_count: usize,
    rng: &mut R,
) -> Result<f64> {
    if !(params.delta_g() > 0.0) {
        return Err(Error::Calibration(format!(
            "degenerate device: g_high_mean {} <= g_low_mean {}",
            params.g_high_mean, params.g_low_mean
        )));
    }
    params.validate()?;
    if sample_count < 1000 {
        return Err(Error::Precondition(format!(
            "correction fit needs >= 1000 samples, got {sample_count}"
        )));
    }
    least_squares_correction(&collect_correction_samples(params, sample_count, rng))
}

/// Hardware and calibration settings used by [`map_linear`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MappingConfig {
    pub tile: TileLimits,
    pub dac: ConverterSpec,
    pub adc_bits: u32,
    /// Fixed ADC range in amperes; `None` sizes each tile for its worst-case
    /// column current `rows * g_high_mean * v_read_max`.
    pub adc_full_scale: Option<f64>,
    /// Multiplier in (0, 1] on the worst-case range. Ignored when
    /// `adc_full_scale` is set.
    pub adc_range_fraction: f64,
    pub correction_samples: usize,
}

impl Default for MappingConfig {
    fn default() -> Self {
        MappingConfig {
            tile: TileLimits::default(),
            dac: ConverterSpec { bits: 8, full_scale: 0.6 },
            adc_bits: 8,
            adc_full_scale: None,
            adc_range_fraction: 1.0,
            correction_samples: 10_000,
        }
    }
}

impl MappingConfig {
    pub fn validate(&self, params: &DeviceModelParams) -> Result<()> {
        self.dac.validate()?;
        if self.dac.full_scale > params.v_read_max {
            return Err(Error::InvalidConverter(format!(
                "DAC full scale {} V exceeds the safe read range {} V",
                self.dac.full_scale, params.v_read_max
            )));
        }
        if self.tile.max_rows == 0 || self.tile.max_cols == 0 {
            return Err(Error::Precondition("tile size must be positive".into()));
        }
        if !(self.adc_range_fraction > 0.0 && self.adc_range_fraction <= 1.0) {
            return Err(Error::InvalidConverter(format!(
                "ADC range fraction {} outside (0, 1]",
                self.adc_range_fraction
            )));
        }
        self.adc_for_rows(1, params).validate()
    }

    pub fn adc_for_rows(&self, rows: usize, params: &DeviceModelParams) -> ConverterSpec {
        ConverterSpec {
            bits: self.adc_bits,
            full_scale: self
                .adc_full_scale
                .unwrap_or(self.adc_range_fraction * rows as f64 * params.g_high_mean * params.v_read_max),
        }
    }
}

fn blocks(n: usize, size: usize) -> usize {
    n.div_ceil(size)
}

/// A linear layer held on stacked, tiled crossbars.
#[derive(Debug, Clone)]
pub struct MappedLinear {
    in_features: usize,
    out_features: usize,
    scheme: QuantScheme,
    input_scale: f64,
    correction_factor: f64,
    tile: TileLimits,
    dac: ConverterSpec,
    seed: u64,
    params: DeviceModelParams,
    /// Indexed `[level][row_block][col_block]`, flattened.
    tiles: Vec<CrossbarTile>,
}

/// Scalar header fields of a [`MappedLinear`], as stored in checkpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappedLinearHeader {
    pub in_features: usize,
    pub out_features: usize,
    pub scheme: QuantScheme,
    pub input_scale: f64,
    pub correction_factor: f64,
    pub tile: TileLimits,
    pub dac: ConverterSpec,
    pub seed: u64,
    pub params: DeviceModelParams,
}

/// Quantize, decompose and program a weight matrix.
///
/// `weights` is row-major `in_features x out_features`. `input_scale`
/// multiplies raw activations into [-1, 1] (the reciprocal of the observed
/// activation range). Each tile is programmed from its own child stream of
/// `seed`, so the result does not depend on thread scheduling.
#[allow(clippy::too_many_arguments)]
pub fn map_linear(
    weights: &[f64],
    in_features: usize,
    out_features: usize,
    scheme: QuantScheme,
    input_scale: f64,
    params: &DeviceModelParams,
    config: &MappingConfig,
    seed: u64,
) -> Result<MappedLinear> {
    params.validate()?;
    config.validate(params)?;
    if in_features == 0 || out_features == 0 || weights.len() != in_features * out_features {
        return Err(Error::shape(
            format!("{in_features}x{out_features}"),
            format!("{} weights", weights.len()),
        ));
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Precondition("weights must be finite".into()));
    }
    if !(input_scale > 0.0 && input_scale.is_finite()) {
        return Err(Error::Precondition(format!("input scale must be positive, got {input_scale}")));
    }
    let q = quantize_weights(weights, &scheme);
    let levels = (scheme.bits - 1) as usize;
    let mut planes = vec![vec![0i8; q.len()]; levels];
    for (idx, &level) in q.iter().enumerate() {
        for (k, d) in decompose_bits(level, scheme.bits)?.into_iter().enumerate() {
            planes[k][idx] = d;
        }
    }

    let (tr, tc) = (config.tile.max_rows, config.tile.max_cols);
    let (nrb, ncb) = (blocks(in_features, tr), blocks(out_features, tc));
    let index: Vec<(usize, usize, usize)> = (0..levels)
        .flat_map(|k| (0..nrb).flat_map(move |rb| (0..ncb).map(move |cb| (k, rb, cb))))
        .collect();
    let tiles = index
        .par_iter()
        .enumerate()
        .map(|(t, &(k, rb, cb))| {
            let r0 = rb * tr;
            let c0 = cb * tc;
            let rows = tr.min(in_features - r0);
            let cols = tc.min(out_features - c0);
            let mut block = Vec::with_capacity(rows * cols);
            for i in r0..r0 + rows {
                block.extend_from_slice(&planes[k][i * out_features + c0..i * out_features + c0 + cols]);
            }
            let mut tile = CrossbarTile::new(
                rows,
                cols,
                config.tile,
                *params,
                config.adc_for_rows(rows, params),
            )?;
            let mut rng = child_rng(seed, &[1, t as u64]);
            tile.program(&block, &mut rng)?;
            Ok(tile)
        })
        .collect::<Result<Vec<_>>>()?;

    let correction_factor =
        fit_correction_factor(params, config.correction_samples, &mut child_rng(seed, &[0]))?;
    Ok(MappedLinear {
        in_features,
        out_features,
        scheme,
        input_scale,
        correction_factor,
        tile: config.tile,
        dac: config.dac,
        seed,
        params: *params,
        tiles,
    })
}

impl MappedLinear {
    /// Reassemble a layer from a header and its tiles in `[level][rb][cb]`
    /// order, checking that the tiles partition the matrix.
    pub fn from_parts(header: MappedLinearHeader, tiles: Vec<CrossbarTile>) -> Result<Self> {
        let h = header;
        h.params.validate()?;
        h.dac.validate()?;
        QuantScheme::new(h.scheme.bits, h.scheme.scale)?;
        if h.tile.max_rows == 0 || h.tile.max_cols == 0 || h.in_features == 0 || h.out_features == 0 {
            return Err(Error::Precondition("empty layer or tile size".into()));
        }
        for (name, v) in [("input_scale", h.input_scale), ("correction_factor", h.correction_factor)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Precondition(format!("{name} must be positive, got {v}")));
            }
        }
        let levels = (h.scheme.bits - 1) as usize;
        let nrb = blocks(h.in_features, h.tile.max_rows);
        let ncb = blocks(h.out_features, h.tile.max_cols);
        if tiles.len() != levels * nrb * ncb {
            return Err(Error::shape(levels * nrb * ncb, format!("{} tiles", tiles.len())));
        }
        for (t, tile) in tiles.iter().enumerate() {
            let rb = (t / ncb) % nrb;
            let cb = t % ncb;
            let rows = h.tile.max_rows.min(h.in_features - rb * h.tile.max_rows);
            let cols = h.tile.max_cols.min(h.out_features - cb * h.tile.max_cols);
            if tile.rows() != rows || tile.cols() != cols {
                return Err(Error::shape(
                    format!("tile {t}: {rows}x{cols}"),
                    format!("{}x{}", tile.rows(), tile.cols()),
                ));
            }
        }
        Ok(MappedLinear {
            in_features: h.in_features,
            out_features: h.out_features,
            scheme: h.scheme,
            input_scale: h.input_scale,
            correction_factor: h.correction_factor,
            tile: h.tile,
            dac: h.dac,
            seed: h.seed,
            params: h.params,
            tiles,
        })
    }

    pub fn header(&self) -> MappedLinearHeader {
        MappedLinearHeader {
            in_features: self.in_features,
            out_features: self.out_features,
            scheme: self.scheme,
            input_scale: self.input_scale,
            correction_factor: self.correction_factor,
            tile: self.tile,
            dac: self.dac,
            seed: self.seed,
            params: self.params,
        }
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }

    pub fn scheme(&self) -> QuantScheme {
        self.scheme
    }

    pub fn input_scale(&self) -> f64 {
        self.input_scale
    }

    pub fn correction_factor(&self) -> f64 {
        self.correction_factor
    }

    pub fn set_correction_factor(&mut self, c: f64) {
        self.correction_factor = c;
    }

    pub fn levels(&self) -> usize {
        (self.scheme.bits - 1) as usize
    }

    pub fn row_blocks(&self) -> usize {
        blocks(self.in_features, self.tile.max_rows)
    }

    pub fn col_blocks(&self) -> usize {
        blocks(self.out_features, self.tile.max_cols)
    }

    pub fn tiles(&self) -> &[CrossbarTile] {
        &self.tiles
    }

    pub fn tile_at(&self, level: usize, row_block: usize, col_block: usize) -> &CrossbarTile {
        &self.tiles[(level * self.row_blocks() + row_block) * self.col_blocks() + col_block]
    }

    /// Integer weight levels recovered from the programmed digit planes.
    pub fn integer_weights(&self) -> Vec<i32> {
        let mut q = vec![0i32; self.in_features * self.out_features];
        let (tr, tc) = (self.tile.max_rows, self.tile.max_cols);
        for k in 0..self.levels() {
            let sig = level_significance(self.scheme.bits, k);
            for rb in 0..self.row_blocks() {
                for cb in 0..self.col_blocks() {
                    let tile = self.tile_at(k, rb, cb);
                    for i in 0..tile.rows() {
                        for j in 0..tile.cols() {
                            let w = tile.weights()[i * tile.cols() + j] as i32;
                            q[(rb * tr + i) * self.out_features + cb * tc + j] += sig * w;
                        }
                    }
                }
            }
        }
        q
    }

    /// Reset every cell with random pulses, then program the stored digit
    /// planes again. Produces a fresh device instance.
    pub fn reprogram(&mut self, num_pulses: usize, seed: u64) -> Result<()> {
        self.tiles
            .par_iter_mut()
            .enumerate()
            .try_for_each(|(t, tile)| {
                let mut rng = child_rng(seed, &[2, t as u64]);
                tile.reset_random(num_pulses, &mut rng)?;
                tile.reprogram(&mut rng);
                Ok(())
            })
    }

    /// Worst-case deviation of one output from the integer-matmul result when
    /// the analog path is noiseless: one ADC step per partial sum, weighted by
    /// bit significance and carried through the output scales.
    pub fn adc_error_bound(&self) -> f64 {
        let mut bound = 0.0;
        for k in 0..self.levels() {
            let sig = level_significance(self.scheme.bits, k) as f64;
            for rb in 0..self.row_blocks() {
                bound += sig * self.tile_at(k, rb, 0).adc().step();
            }
        }
        bound * self.correction_factor / self.input_scale * self.scheme.scale
    }

    /// Quantized input voltages for a raw activation vector.
    pub fn input_voltages(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.dac.dac(v * self.input_scale)).collect()
    }

    pub fn forward<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let mut tally = SaturationTally::default();
        self.forward_with_tally(x, rng, &mut tally)
    }

    /// Forward pass with read noise from a child stream of `seed`.
    pub fn forward_seeded(&self, x: &[f64], seed: u64) -> Result<Vec<f64>> {
        self.forward(x, &mut child_rng(seed, &[3]))
    }

    /// Row-major batch forward; sample `i` uses child stream `i` of `seed`.
    pub fn forward_batch(&self, xs: &[f64], seed: u64) -> Result<Vec<f64>> {
        if !xs.len().is_multiple_of(self.in_features) {
            return Err(Error::shape(
                format!("multiple of {}", self.in_features),
                xs.len(),
            ));
        }
        let rows: Vec<Vec<f64>> = xs
            .par_chunks(self.in_features)
            .enumerate()
            .map(|(i, x)| self.forward(x, &mut child_rng(seed, &[4, i as u64])))
            .collect::<Result<_>>()?;
        Ok(rows.concat())
    }

    pub fn forward_with_tally<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        rng: &mut R,
        tally: &mut SaturationTally,
    ) -> Result<Vec<f64>> {
        if x.len() != self.in_features {
            return Err(Error::shape(self.in_features, x.len()));
        }
        let voltages = self.input_voltages(x);
        let (tr, tc) = (self.tile.max_rows, self.tile.max_cols);
        let mut raw = vec![0.0; self.out_features];
        let mut level_sum = vec![0.0; self.out_features];
        let mut buf = vec![0.0; tc.min(self.out_features)];
        for k in 0..self.levels() {
            level_sum.fill(0.0);
            for rb in 0..self.row_blocks() {
                let r0 = rb * tr;
                let v = &voltages[r0..(r0 + tr).min(self.in_features)];
                // an all-zero row block contributes exactly zero
                if v.iter().all(|&v| v == 0.0) {
                    continue;
                }
                for cb in 0..self.col_blocks() {
                    let tile = self.tile_at(k, rb, cb);
                    let out = &mut buf[..tile.cols()];
                    tile.vmm_into(v, rng, out);
                    let adc = tile.adc();
                    for (j, &current) in out.iter().enumerate() {
                        let code = adc.adc(current, tally);
                        level_sum[cb * tc + j] += adc.code_to_value(code) * self.correction_factor;
                    }
                }
            }
            let sig = level_significance(self.scheme.bits, k) as f64;
            for (r, s) in raw.iter_mut().zip(&level_sum) {
                *r += sig * s;
            }
        }
        let gain = self.scheme.scale / self.input_scale;
        Ok(raw.into_iter().map(|r| r * gain).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn weight_factor_example() {
        let s = QuantScheme::from_max_abs(0.1, 4).unwrap();
        assert_eq!(s.max_level(), 7);
        assert!((s.weight_factor() - 70.0).abs() < 1e-9);
        assert_eq!(s.zero_point(), 0);
    }

    #[test]
    fn quantize_examples() {
        let s = QuantScheme::new(4, 0.1 / 7.0).unwrap();
        assert_eq!(quantize_weights(&[0.0, 0.0], &s), vec![0, 0]);
        assert_eq!(quantize_weights(&[0.05, -0.05], &s), vec![4, -4]);
        assert_eq!(quantize_weights(&[0.1, -0.3], &s), vec![7, -7]);
    }

    #[test]
    fn zero_tensor_scale_falls_back() {
        let s = QuantScheme::from_max_abs(0.0, 3).unwrap();
        assert_eq!(s.scale, 1.0);
        assert_eq!(quantize_weights(&[0.0; 4], &s), vec![0; 4]);
    }

    #[test]
    fn scheme_validation() {
        assert!(QuantScheme::new(1, 0.1).is_err());
        assert!(QuantScheme::new(9, 0.1).is_err());
        assert!(QuantScheme::new(4, 0.0).is_err());
    }

    #[test]
    fn decompose_examples() {
        assert_eq!(decompose_bits(7, 4).unwrap(), vec![1, 1, 1]);
        assert_eq!(decompose_bits(0, 4).unwrap(), vec![0, 0, 0]);
        assert_eq!(decompose_bits(-5, 4).unwrap(), vec![-1, 0, -1]);
        assert_eq!(
            (0..3).map(|k| level_significance(4, k)).collect::<Vec<_>>(),
            vec![4, 2, 1]
        );
        assert!(matches!(decompose_bits(8, 4), Err(Error::LevelOutOfRange { .. })));
    }

    #[test]
    fn decompose_round_trip_exhaustive() {
        for bits in 2..=8 {
            let l = max_level(bits);
            for q in -l..=l {
                let d = decompose_bits(q, bits).unwrap();
                assert_eq!(d.len(), bits as usize - 1);
                assert!(d.iter().all(|x| (-1..=1).contains(x)));
                assert_eq!(compose_bits(&d, bits), q);
            }
        }
    }

    #[test]
    fn correction_factor_noiseless_closed_form() {
        let p = DeviceModelParams::ideal(41.9e-6, 250e-6);
        let c = fit_correction_factor(&p, 2000, &mut rng_from_seed(1)).unwrap();
        let closed = 1.0 / (0.6 * p.delta_g());
        assert!((c / closed - 1.0).abs() < 1e-9);
        assert!((c - 8009.0).abs() < 1.0, "{c}");
    }

    #[test]
    fn correction_factor_scales_inversely() {
        let p = DeviceModelParams::ideal(42e-6, 250e-6);
        let p2 = DeviceModelParams::ideal(84e-6, 500e-6);
        let c = fit_correction_factor(&p, 1000, &mut rng_from_seed(1)).unwrap();
        let c2 = fit_correction_factor(&p2, 1000, &mut rng_from_seed(1)).unwrap();
        assert!((c / c2 - 2.0).abs() < 1e-9);
    }

    #[test]
    fn correction_factor_errors() {
        let mut p = DeviceModelParams::ideal(42e-6, 250e-6);
        assert!(matches!(
            fit_correction_factor(&p, 10, &mut rng_from_seed(0)),
            Err(Error::Precondition(_))
        ));
        p.g_high_mean = p.g_low_mean;
        assert!(matches!(
            fit_correction_factor(&p, 5000, &mut rng_from_seed(0)),
            Err(Error::Calibration(_))
        ));
    }

    #[test]
    fn tile_count_for_conformer_sized_matrix() {
        let (n, m) = (384, 1536);
        let w = vec![0.01; n * m];
        let scheme = QuantScheme::from_max_abs(0.01, 4).unwrap();
        let cfg = MappingConfig {
            correction_samples: 1000,
            ..MappingConfig::default()
        };
        let layer = map_linear(
            &w,
            n,
            m,
            scheme,
            1.0,
            &DeviceModelParams::ideal(42e-6, 250e-6),
            &cfg,
            0,
        )
        .unwrap();
        assert_eq!((layer.row_blocks(), layer.col_blocks()), (3, 12));
        assert_eq!(layer.tiles().len(), 108);
        assert!(layer.tiles().iter().all(|t| t.rows() <= 128 && t.cols() <= 128));
    }

    #[test]
    fn single_weight_full_scale() {
        let scheme = QuantScheme::new(4, 0.02).unwrap();
        let layer = map_linear(
            &[0.02 * 7.0],
            1,
            1,
            scheme,
            1.0,
            &DeviceModelParams::ideal(42e-6, 250e-6),
            &MappingConfig::default(),
            3,
        )
        .unwrap();
        assert_eq!(layer.tiles().len(), 3);
        for k in 0..3 {
            assert_eq!(layer.tile_at(k, 0, 0).weights(), &[1]);
        }
        assert_eq!(layer.integer_weights(), vec![7]);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let w = [0.3, -0.2, 0.1, 0.05, -0.4, 0.25];
        let scheme = QuantScheme::from_max_abs(0.4, 3).unwrap();
        let layer = map_linear(
            &w,
            3,
            2,
            scheme,
            0.5,
            &DeviceModelParams::default(),
            &MappingConfig::default(),
            9,
        )
        .unwrap();
        let y = layer.forward(&[0.0; 3], &mut rng_from_seed(0)).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
        assert!(layer.forward(&[0.0; 2], &mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn map_linear_rejects_bad_input() {
        let scheme = QuantScheme::new(3, 0.1).unwrap();
        let p = DeviceModelParams::default();
        let cfg = MappingConfig::default();
        assert!(map_linear(&[0.1; 3], 2, 2, scheme, 1.0, &p, &cfg, 0).is_err());
        assert!(map_linear(&[f64::NAN; 4], 2, 2, scheme, 1.0, &p, &cfg, 0).is_err());
        assert!(map_linear(&[0.1; 4], 2, 2, scheme, 0.0, &p, &cfg, 0).is_err());
    }

    #[test]
    fn batch_of_one_equals_vector_call() {
        let w: Vec<f64> = (0..12).map(|k| (k as f64 - 6.0) * 0.03).collect();
        let scheme = QuantScheme::from_max_abs(0.18, 5).unwrap();
        let layer = map_linear(
            &w,
            4,
            3,
            scheme,
            0.5,
            &DeviceModelParams::default(),
            &MappingConfig::default(),
            5,
        )
        .unwrap();
        let x = [0.4, -1.2, 0.9, 2.0];
        let batch = layer.forward_batch(&x, 17).unwrap();
        let single = layer.forward(&x, &mut child_rng(17, &[4, 0])).unwrap();
        assert_eq!(batch, single);
        assert_eq!(layer.forward_batch(&[0.0; 8], 1).unwrap(), vec![0.0; 6]);
    }

    #[test]
    fn reprogram_changes_conductances_but_not_weights() {
        let w: Vec<f64> = (0..20).map(|k| ((k * 7) % 11) as f64 / 11.0 - 0.5).collect();
        let scheme = QuantScheme::from_max_abs(0.5, 4).unwrap();
        let mut layer = map_linear(
            &w,
            5,
            4,
            scheme,
            1.0,
            &DeviceModelParams::default(),
            &MappingConfig::default(),
            1,
        )
        .unwrap();
        let q = layer.integer_weights();
        let before: Vec<f64> = layer.tiles()[0].positive_conductances().collect();
        layer.reprogram(3, 77).unwrap();
        let after: Vec<f64> = layer.tiles()[0].positive_conductances().collect();
        assert_ne!(before, after);
        assert_eq!(layer.integer_weights(), q);
        assert_eq!(q, quantize_weights(&w, &scheme));
    }
}
