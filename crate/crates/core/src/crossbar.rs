//! Paired-bitline crossbar tiles.
//!
//! A tile with `rows x cols` logical weights owns `rows x 2*cols` physical
//! cells: logical column `j` is the difference between a positive and a
//! negative bitline. Row voltages drive every cell of the row and column
//! currents add at ideal Kirchhoff nodes (no wire resistance, no sneak paths).

use rand::Rng;

use crate::convert::ConverterSpec;
use crate::device::{
    program_cell, read_current_unchecked, reset_cell_random, CellLevel, DeviceModelParams,
    ProgrammedCell,
};
use crate::error::{Error, Result};

pub const DEFAULT_TILE_SIZE: usize = 128;

/// Largest logical tile accepted by [`CrossbarTile::new`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TileLimits {
    pub max_rows: usize,
    pub max_cols: usize,
}

impl Default for TileLimits {
    fn default() -> Self {
        TileLimits {
            max_rows: DEFAULT_TILE_SIZE,
            max_cols: DEFAULT_TILE_SIZE,
        }
    }
}

impl TileLimits {
    pub fn square(size: usize) -> Self {
        TileLimits {
            max_rows: size,
            max_cols: size,
        }
    }
}

/// Cell levels for a ternary weight on the (positive, negative) bitlines.
pub fn pair_levels(weight: i8) -> (CellLevel, CellLevel) {
    match weight.signum() {
        1 => (CellLevel::High, CellLevel::Low),
        -1 => (CellLevel::Low, CellLevel::High),
        _ => (CellLevel::Low, CellLevel::Low),
    }
}

#[derive(Debug, Clone)]
pub struct CrossbarTile {
    rows: usize,
    cols: usize,
    /// Row-major `rows x cols`.
    positive: Vec<ProgrammedCell>,
    negative: Vec<ProgrammedCell>,
    weights: Vec<i8>,
    params: DeviceModelParams,
    adc: ConverterSpec,
}

impl CrossbarTile {
    /// A tile whose cells sit at the nominal low state, holding weight 0.
    pub fn new(
        rows: usize,
        cols: usize,
        limits: TileLimits,
        params: DeviceModelParams,
        adc: ConverterSpec,
    ) -> Result<Self> {
        params.validate()?;
        adc.validate()?;
        if rows == 0 || cols == 0 || rows > limits.max_rows || cols > limits.max_cols {
            return Err(Error::shape(
                format!("1..={} x 1..={}", limits.max_rows, limits.max_cols),
                format!("{rows} x {cols}"),
            ));
        }
        let idle = ProgrammedCell {
            g_actual: params.g_low_mean,
            target: None,
        };
        Ok(CrossbarTile {
            rows,
            cols,
            positive: vec![idle; rows * cols],
            negative: vec![idle; rows * cols],
            weights: vec![0; rows * cols],
            params,
            adc,
        })
    }

    /// Rebuild a tile from stored conductances (checkpoint restore).
    pub fn from_parts(
        rows: usize,
        cols: usize,
        params: DeviceModelParams,
        adc: ConverterSpec,
        weights: Vec<i8>,
        g_positive: &[f64],
        g_negative: &[f64],
    ) -> Result<Self> {
        params.validate()?;
        adc.validate()?;
        let n = rows * cols;
        if n == 0 || weights.len() != n || g_positive.len() != n || g_negative.len() != n {
            return Err(Error::shape(
                format!("{n} cells"),
                format!(
                    "{} weights, {} positive, {} negative",
                    weights.len(),
                    g_positive.len(),
                    g_negative.len()
                ),
            ));
        }
        if weights.iter().any(|w| !(-1..=1).contains(w)) {
            return Err(Error::Precondition("tile weights must be ternary".into()));
        }
        if g_positive.iter().chain(g_negative).any(|g| !(*g > 0.0 && g.is_finite())) {
            return Err(Error::Precondition("conductances must be positive".into()));
        }
        let cells = |g: &[f64], pick: fn((CellLevel, CellLevel)) -> CellLevel| {
            g.iter()
                .zip(&weights)
                .map(|(&g_actual, &w)| ProgrammedCell {
                    g_actual,
                    target: Some(pick(pair_levels(w))),
                })
                .collect::<Vec<_>>()
        };
        let positive = cells(g_positive, |p| p.0);
        let negative = cells(g_negative, |p| p.1);
        Ok(CrossbarTile {
            rows,
            cols,
            positive,
            negative,
            weights,
            params,
            adc,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn params(&self) -> &DeviceModelParams {
        &self.params
    }

    pub fn adc(&self) -> &ConverterSpec {
        &self.adc
    }

    pub fn weights(&self) -> &[i8] {
        &self.weights
    }

    /// (positive, negative) cells at logical position `(row, col)`.
    pub fn pair(&self, row: usize, col: usize) -> (ProgrammedCell, ProgrammedCell) {
        let k = row * self.cols + col;
        (self.positive[k], self.negative[k])
    }

    pub fn positive_conductances(&self) -> impl Iterator<Item = f64> + '_ {
        self.positive.iter().map(|c| c.g_actual)
    }

    pub fn negative_conductances(&self) -> impl Iterator<Item = f64> + '_ {
        self.negative.iter().map(|c| c.g_actual)
    }

    /// Program every pair from a row-major ternary matrix.
    pub fn program<R: Rng + ?Sized>(&mut self, ternary: &[i8], rng: &mut R) -> Result<()> {
        if ternary.len() != self.rows * self.cols {
            return Err(Error::shape(
                format!("{}x{} = {}", self.rows, self.cols, self.rows * self.cols),
                ternary.len(),
            ));
        }
        if let Some(w) = ternary.iter().find(|w| !(-1..=1).contains(*w)) {
            return Err(Error::LevelOutOfRange {
                level: *w as i32,
                max_level: 1,
            });
        }
        self.weights.copy_from_slice(ternary);
        self.reprogram(rng);
        Ok(())
    }

    /// Program again to the stored ternary weights.
    pub fn reprogram<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for k in 0..self.weights.len() {
            let (p, n) = pair_levels(self.weights[k]);
            self.positive[k] = program_cell(&self.params, p, rng);
            self.negative[k] = program_cell(&self.params, n, rng);
        }
    }

    /// Apply random reset pulses to every cell.
    pub fn reset_random<R: Rng + ?Sized>(&mut self, num_pulses: usize, rng: &mut R) -> Result<()> {
        for cell in self.positive.iter_mut().chain(self.negative.iter_mut()) {
            *cell = reset_cell_random(cell, &self.params, num_pulses, rng)?;
        }
        Ok(())
    }

    fn check_voltages(&self, voltages: &[f64]) -> Result<()> {
        if voltages.len() != self.rows {
            return Err(Error::shape(self.rows, voltages.len()));
        }
        let limit = self.params.v_read_max;
        match voltages.iter().find(|v| !(v.abs() <= limit)) {
            Some(&voltage) => Err(Error::VoltageOutOfRange { voltage, limit }),
            None => Ok(()),
        }
    }

    /// Analog product: per logical column, positive minus negative bitline
    /// current. Read noise is drawn fresh on every call.
    pub fn vmm<R: Rng + ?Sized>(&self, voltages: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        self.check_voltages(voltages)?;
        let mut out = vec![0.0; self.cols];
        self.vmm_into(voltages, rng, &mut out);
        Ok(out)
    }

    /// Like [`vmm`](Self::vmm) without input validation; `out` is overwritten.
    pub(crate) fn vmm_into<R: Rng + ?Sized>(&self, voltages: &[f64], rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.cols);
        out.fill(0.0);
        for (i, &v) in voltages.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let base = i * self.cols;
            let pos = &self.positive[base..base + self.cols];
            let neg = &self.negative[base..base + self.cols];
            for ((o, p), n) in out.iter_mut().zip(pos).zip(neg) {
                let ip = read_current_unchecked(p.g_actual, &self.params, v, rng);
                let in_ = read_current_unchecked(n.g_actual, &self.params, v, rng);
                *o += ip - in_;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn ideal() -> DeviceModelParams {
        DeviceModelParams::ideal(42e-6, 250e-6)
    }

    fn adc() -> ConverterSpec {
        ConverterSpec::new(8, 1e-3).unwrap()
    }

    fn tile(rows: usize, cols: usize, params: DeviceModelParams) -> CrossbarTile {
        CrossbarTile::new(rows, cols, TileLimits::default(), params, adc()).unwrap()
    }

    #[test]
    fn zero_weight_cancels() {
        let mut t = tile(1, 1, ideal());
        let mut rng = rng_from_seed(0);
        t.program(&[0], &mut rng).unwrap();
        for v in [-0.6, -0.1, 0.0, 0.25, 0.6] {
            assert_eq!(t.vmm(&[v], &mut rng).unwrap(), vec![0.0]);
        }
    }

    #[test]
    fn plus_one_with_nonlinearity() {
        let mut p = ideal();
        p.nonlin_alpha = 0.03;
        let mut t = tile(1, 1, p);
        let mut rng = rng_from_seed(0);
        t.program(&[1], &mut rng).unwrap();
        let out = t.vmm(&[0.6], &mut rng).unwrap();
        let expected = (250e-6 - 42e-6) * 0.6 * (1.0 + 0.03 * 0.6);
        assert!((out[0] - expected).abs() < 1e-18);
    }

    #[test]
    fn two_by_two_hand_evaluation() {
        let mut t = tile(2, 2, ideal());
        let mut rng = rng_from_seed(0);
        t.program(&[1, 0, 0, -1], &mut rng).unwrap();
        let out = t.vmm(&[0.6, 0.6], &mut rng).unwrap();
        let dg = 208e-6;
        assert!((out[0] - dg * 0.6).abs() < 1e-18);
        assert!((out[1] + dg * 0.6).abs() < 1e-18);
    }

    #[test]
    fn zero_voltage_gives_zero_current() {
        let mut t = tile(4, 3, DeviceModelParams::default());
        let mut rng = rng_from_seed(4);
        t.program(&[1, -1, 0, 1, 1, 1, -1, 0, 0, 1, -1, 1], &mut rng).unwrap();
        assert_eq!(t.vmm(&[0.0; 4], &mut rng).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn pairing_follows_weight_sign() {
        let mut t = tile(1, 3, ideal());
        let mut rng = rng_from_seed(0);
        t.program(&[1, 0, -1], &mut rng).unwrap();
        let levels = |c: usize| {
            let (p, n) = t.pair(0, c);
            (p.target.unwrap(), n.target.unwrap())
        };
        assert_eq!(levels(0), (CellLevel::High, CellLevel::Low));
        assert_eq!(levels(1), (CellLevel::Low, CellLevel::Low));
        assert_eq!(levels(2), (CellLevel::Low, CellLevel::High));
    }

    #[test]
    fn shape_and_range_errors() {
        let mut rng = rng_from_seed(0);
        assert!(CrossbarTile::new(129, 4, TileLimits::default(), ideal(), adc()).is_err());
        assert!(CrossbarTile::new(0, 4, TileLimits::default(), ideal(), adc()).is_err());
        let mut t = tile(2, 2, ideal());
        assert!(matches!(t.program(&[1, 0, 0], &mut rng), Err(Error::Shape { .. })));
        assert!(matches!(
            t.program(&[1, 0, 0, 2], &mut rng),
            Err(Error::LevelOutOfRange { .. })
        ));
        assert!(matches!(t.vmm(&[0.1], &mut rng), Err(Error::Shape { .. })));
        assert!(matches!(
            t.vmm(&[0.1, 0.7], &mut rng),
            Err(Error::VoltageOutOfRange { .. })
        ));
    }

    #[test]
    fn noiseless_linear_mode_matches_matmul() {
        let (rows, cols) = (7, 5);
        let mut rng = rng_from_seed(12);
        let w: Vec<i8> = (0..rows * cols).map(|_| rng.random_range(-1..=1)).collect();
        let v: Vec<f64> = (0..rows).map(|_| rng.random_range(-0.6..=0.6)).collect();
        let mut t = tile(rows, cols, ideal());
        t.program(&w, &mut rng).unwrap();
        let out = t.vmm(&v, &mut rng).unwrap();
        for j in 0..cols {
            let expected: f64 = (0..rows).map(|i| w[i * cols + j] as f64 * v[i] * 208e-6).sum();
            assert!((out[j] - expected).abs() < 1e-15, "col {j}");
        }
    }

    #[test]
    fn linearity_in_expectation_without_nonlinearity() {
        let mut p = DeviceModelParams::default();
        p.nonlin_alpha = 0.0;
        let mut t = tile(3, 2, p);
        let mut rng = rng_from_seed(77);
        t.program(&[1, -1, 0, 1, -1, 1], &mut rng).unwrap();
        let v1 = [0.1, 0.2, -0.1];
        let v2 = [0.2, -0.1, 0.3];
        let v12: Vec<f64> = v1.iter().zip(&v2).map(|(a, b)| a + b).collect();
        let mean = |v: &[f64], rng: &mut crate::rng::SimRng| {
            let n = 20_000;
            let mut acc = [0.0; 2];
            for _ in 0..n {
                let o = t.vmm(v, rng).unwrap();
                acc[0] += o[0];
                acc[1] += o[1];
            }
            [acc[0] / n as f64, acc[1] / n as f64]
        };
        let (a, b, ab) = (mean(&v1, &mut rng), mean(&v2, &mut rng), mean(&v12, &mut rng));
        for j in 0..2 {
            let scale = 1e-6 * 0.3;
            assert!((ab[j] - a[j] - b[j]).abs() < 0.02 * scale + 1e-3 * ab[j].abs(), "col {j}");
        }
    }

    #[test]
    fn column_permutation_commutes() {
        let p = DeviceModelParams::ideal(30e-6, 200e-6);
        let w = [1i8, 0, -1, -1, 1, 0];
        let perm = [2usize, 0, 1];
        let wp: Vec<i8> = (0..2)
            .flat_map(|i| perm.iter().map(move |&j| w[i * 3 + j]))
            .collect();
        let mut rng = rng_from_seed(0);
        let mut a = tile(2, 3, p);
        let mut b = tile(2, 3, p);
        a.program(&w, &mut rng).unwrap();
        b.program(&wp, &mut rng).unwrap();
        let v = [0.4, -0.3];
        let oa = a.vmm(&v, &mut rng).unwrap();
        let ob = b.vmm(&v, &mut rng).unwrap();
        for (k, &j) in perm.iter().enumerate() {
            assert_eq!(ob[k], oa[j]);
        }
    }

    #[test]
    fn reset_then_reprogram_restores_targets() {
        let mut t = tile(2, 2, DeviceModelParams::default());
        let mut rng = rng_from_seed(2);
        t.program(&[1, -1, 0, 1], &mut rng).unwrap();
        t.reset_random(4, &mut rng).unwrap();
        assert!(t.pair(0, 0).0.target.is_none());
        t.reprogram(&mut rng);
        assert_eq!(t.pair(0, 1).1.target, Some(CellLevel::High));
    }

    #[test]
    fn from_parts_validates() {
        let p = ideal();
        assert!(CrossbarTile::from_parts(1, 2, p, adc(), vec![1, 0], &[1e-4, 1e-4], &[1e-4, 1e-4]).is_ok());
        assert!(CrossbarTile::from_parts(1, 2, p, adc(), vec![1, 3], &[1e-4, 1e-4], &[1e-4, 1e-4]).is_err());
        assert!(CrossbarTile::from_parts(1, 2, p, adc(), vec![1, 0], &[1e-4, -1.0], &[1e-4, 1e-4]).is_err());
        assert!(CrossbarTile::from_parts(1, 2, p, adc(), vec![1], &[1e-4], &[1e-4]).is_err());
    }
}
