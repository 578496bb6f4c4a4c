//! Binary checkpoint format for mapped layers and trained networks.
//!
//! Little-endian throughout. Every file starts with an 8-byte preamble:
//!
//! | bytes | field                                  |
//! |-------|----------------------------------------|
//! | 0..4  | magic `MXBR`                           |
//! | 4..6  | format version (u16, currently 1)      |
//! | 6     | kind: 1 = mapped layer, 2 = network    |
//! | 7     | reserved, 0                            |
//!
//! A mapped layer continues with its header (dims, weight bits, scales,
//! correction factor, tile size, seed, DAC spec, device parameters, tile
//! count) and then, per tile in `[level][row_block][col_block]` order, the
//! tile shape and ADC spec followed by the positive and negative conductance
//! arrays as row-major f64 and the ternary digit plane as i8.
//!
//! A network continues with the weight bit width (0 for a float network
//! without observers), the layer count and, per layer, its shape, weights,
//! biases and the weight and input observer maxima.

use std::path::Path;

use crate::convert::ConverterSpec;
use crate::crossbar::{CrossbarTile, TileLimits};
use crate::device::DeviceModelParams;
use crate::error::{Error, Result};
use crate::mapping::{MappedLinear, MappedLinearHeader, QuantScheme};
use crate::qat::{Observer, QuantContext, TinyNet};
use crate::qat::net::Dense;

pub const MAGIC: [u8; 4] = *b"MXBR";
pub const VERSION: u16 = 1;
pub const KIND_MAPPED_LAYER: u8 = 1;
pub const KIND_NETWORK: u8 = 2;

/// Upper bound on any single dimension read from a checkpoint.
const MAX_DIM: usize = 1 << 20;

/// Decoded checkpoint contents.
#[derive(Debug, Clone)]
pub enum Checkpoint {
    MappedLayer(MappedLinear),
    Network {
        net: TinyNet,
        quant: Option<QuantContext>,
    },
}

struct Writer(Vec<u8>);

impl Writer {
    fn new(kind: u8) -> Self {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(&MAGIC);
        w.0.extend_from_slice(&VERSION.to_le_bytes());
        w.0.push(kind);
        w.0.push(0);
        w
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: impl IntoIterator<Item = f64>) {
        for v in vs {
            self.f64(v);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!(
                "truncated at byte {} (need {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn dim(&mut self, what: &str) -> Result<usize> {
        let v = self.u32()? as usize;
        if v > MAX_DIM {
            return Err(Error::Checkpoint(format!("{what} = {v} exceeds {MAX_DIM}")));
        }
        Ok(v)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = n
            .checked_mul(8)
            .ok_or_else(|| Error::Checkpoint("array length overflow".into()))?;
        let raw = self.take(bytes)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn i8s(&mut self, n: usize) -> Result<Vec<i8>> {
        Ok(self.take(n)?.iter().map(|&b| b as i8).collect())
    }
}

fn write_params(w: &mut Writer, p: &DeviceModelParams) {
    w.f64s([
        p.g_low_mean,
        p.g_low_rel_std,
        p.g_high_mean,
        p.g_high_rel_std,
        p.g_half_rel_std,
        p.nonlin_alpha,
        p.read_noise_rel_std,
        p.v_read_max,
    ]);
}

fn read_params(r: &mut Reader<'_>) -> Result<DeviceModelParams> {
    let v = r.f64s(8)?;
    let p = DeviceModelParams {
        g_low_mean: v[0],
        g_low_rel_std: v[1],
        g_high_mean: v[2],
        g_high_rel_std: v[3],
        g_half_rel_std: v[4],
        nonlin_alpha: v[5],
        read_noise_rel_std: v[6],
        v_read_max: v[7],
    };
    p.validate()?;
    Ok(p)
}

pub fn encode_mapped_layer(layer: &MappedLinear) -> Vec<u8> {
    let h = layer.header();
    let mut w = Writer::new(KIND_MAPPED_LAYER);
    w.u32(h.in_features);
    w.u32(h.out_features);
    w.u32(h.scheme.bits as usize);
    w.f64(h.scheme.scale);
    w.f64(h.input_scale);
    w.f64(h.correction_factor);
    w.u32(h.tile.max_rows);
    w.u32(h.tile.max_cols);
    w.u64(h.seed);
    w.u32(h.dac.bits as usize);
    w.f64(h.dac.full_scale);
    write_params(&mut w, &h.params);
    w.u32(layer.tiles().len());
    for tile in layer.tiles() {
        w.u32(tile.rows());
        w.u32(tile.cols());
        w.u32(tile.adc().bits as usize);
        w.f64(tile.adc().full_scale);
        w.f64s(tile.positive_conductances());
        w.f64s(tile.negative_conductances());
        w.0.extend(tile.weights().iter().map(|&d| d as u8));
    }
    w.0
}

fn decode_mapped_layer(r: &mut Reader<'_>) -> Result<MappedLinear> {
    let in_features = r.dim("in_features")?;
    let out_features = r.dim("out_features")?;
    let bits = r.u32()?;
    let scale = r.f64()?;
    let scheme = QuantScheme::new(bits, scale)?;
    let input_scale = r.f64()?;
    let correction_factor = r.f64()?;
    let tile = TileLimits {
        max_rows: r.dim("tile rows")?,
        max_cols: r.dim("tile cols")?,
    };
    let seed = r.u64()?;
    let dac = ConverterSpec::new(r.u32()?, r.f64()?)?;
    let params = read_params(r)?;
    let count = r.dim("tile count")?;
    let mut tiles = Vec::new();
    for _ in 0..count {
        let rows = r.dim("rows")?;
        let cols = r.dim("cols")?;
        let adc = ConverterSpec::new(r.u32()?, r.f64()?)?;
        let n = rows
            .checked_mul(cols)
            .filter(|n| n.checked_mul(17).is_some_and(|b| b <= r.remaining()))
            .ok_or_else(|| Error::Checkpoint(format!("tile {rows}x{cols} exceeds remaining data")))?;
        let pos = r.f64s(n)?;
        let neg = r.f64s(n)?;
        let weights = r.i8s(n)?;
        if rows > tile.max_rows || cols > tile.max_cols {
            return Err(Error::Checkpoint(format!("tile {rows}x{cols} exceeds tile limits")));
        }
        tiles.push(CrossbarTile::from_parts(rows, cols, params, adc, weights, &pos, &neg)?);
    }
    MappedLinear::from_parts(
        MappedLinearHeader {
            in_features,
            out_features,
            scheme,
            input_scale,
            correction_factor,
            tile,
            dac,
            seed,
            params,
        },
        tiles,
    )
}

pub fn encode_network(net: &TinyNet, quant: Option<&QuantContext>) -> Vec<u8> {
    let mut w = Writer::new(KIND_NETWORK);
    w.u32(quant.map_or(0, |q| q.weight_bits as usize));
    w.u32(net.layers.len());
    for (k, layer) in net.layers.iter().enumerate() {
        w.u32(layer.in_features);
        w.u32(layer.out_features);
        w.f64s(layer.weights.iter().copied());
        w.f64s(layer.bias.iter().copied());
        let (wm, am) = quant.map_or((0.0, 0.0), |q| {
            (q.weights[k].running_max_abs, q.activations[k].running_max_abs)
        });
        w.f64(wm);
        w.f64(am);
    }
    w.0
}

fn decode_network(r: &mut Reader<'_>) -> Result<(TinyNet, Option<QuantContext>)> {
    let bits = r.u32()?;
    if bits != 0 && !(2..=8).contains(&bits) {
        return Err(Error::Checkpoint(format!("weight bits {bits} not in 2..=8")));
    }
    let count = r.dim("layer count")?;
    if count == 0 {
        return Err(Error::Checkpoint("network without layers".into()));
    }
    let mut layers = Vec::new();
    let mut weight_obs = Vec::new();
    let mut act_obs = Vec::new();
    for _ in 0..count {
        let n = r.dim("in_features")?;
        let m = r.dim("out_features")?;
        let len = n
            .checked_mul(m)
            .filter(|l| l.checked_add(m).and_then(|t| t.checked_mul(8)).is_some_and(|b| b <= r.remaining()))
            .ok_or_else(|| Error::Checkpoint(format!("layer {n}x{m} exceeds remaining data")))?;
        let weights = r.f64s(len)?;
        let bias = r.f64s(m)?;
        let (wm, am) = (r.f64()?, r.f64()?);
        if !(wm >= 0.0 && am >= 0.0 && wm.is_finite() && am.is_finite()) {
            return Err(Error::Checkpoint("observer maxima must be finite and >= 0".into()));
        }
        let mut wo = Observer::weight(bits.max(2));
        wo.running_max_abs = wm;
        let mut ao = Observer::activation();
        ao.running_max_abs = am;
        weight_obs.push(wo);
        act_obs.push(ao);
        layers.push(Dense {
            in_features: n,
            out_features: m,
            weights,
            bias,
        });
    }
    let net = TinyNet { layers };
    net.validate()?;
    if !net.is_finite() {
        return Err(Error::Checkpoint("non-finite parameters".into()));
    }
    let quant = (bits != 0).then_some(QuantContext {
        weight_bits: bits,
        weights: weight_obs,
        activations: act_obs,
    });
    Ok((net, quant))
}

/// Decode any checkpoint. Untrusted input yields an error, never a panic.
pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let kind = r.u8()?;
    let _reserved = r.u8()?;
    let out = match kind {
        KIND_MAPPED_LAYER => Checkpoint::MappedLayer(decode_mapped_layer(&mut r)?),
        KIND_NETWORK => {
            let (net, quant) = decode_network(&mut r)?;
            Checkpoint::Network { net, quant }
        }
        k => return Err(Error::Checkpoint(format!("unknown kind {k}"))),
    };
    if r.remaining() != 0 {
        return Err(Error::Checkpoint(format!("{} trailing bytes", r.remaining())));
    }
    Ok(out)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::{map_linear, MappingConfig};
    use crate::rng::rng_from_seed;

    fn layer() -> MappedLinear {
        let w: Vec<f64> = (0..15).map(|k| (k as f64 - 7.0) / 10.0).collect();
        let cfg = MappingConfig {
            tile: TileLimits::square(2),
            ..MappingConfig::default()
        };
        map_linear(
            &w,
            5,
            3,
            QuantScheme::from_max_abs(0.8, 4).unwrap(),
            0.5,
            &DeviceModelParams::default(),
            &cfg,
            11,
        )
        .unwrap()
    }

    #[test]
    fn mapped_layer_round_trip_preserves_forward() {
        let l = layer();
        let bytes = encode_mapped_layer(&l);
        assert_eq!(&bytes[..4], b"MXBR");
        let Checkpoint::MappedLayer(back) = decode(&bytes).unwrap() else {
            panic!("wrong kind");
        };
        assert_eq!(back.header(), l.header());
        assert_eq!(encode_mapped_layer(&back), bytes);
        let x = [0.3, -1.0, 2.0, 0.0, 0.7];
        assert_eq!(back.forward_seeded(&x, 5).unwrap(), l.forward_seeded(&x, 5).unwrap());
    }

    #[test]
    fn network_round_trip() {
        let net = TinyNet::new(&[3, 4, 2], &mut rng_from_seed(1)).unwrap();
        let mut q = QuantContext::new(&net, 3);
        q.weights[0].running_max_abs = 0.9;
        q.activations[1].running_max_abs = 4.0;
        let bytes = encode_network(&net, Some(&q));
        let Checkpoint::Network { net: n2, quant } = decode(&bytes).unwrap() else {
            panic!("wrong kind");
        };
        assert_eq!(n2, net);
        assert_eq!(quant.unwrap(), q);
        let Checkpoint::Network { quant, .. } = decode(&encode_network(&net, None)).unwrap() else {
            panic!("wrong kind");
        };
        assert!(quant.is_none());
    }

    #[test]
    fn corrupt_inputs_are_errors() {
        let bytes = encode_mapped_layer(&layer());
        assert!(decode(&[]).is_err());
        assert!(decode(b"NOPE\x01\x00\x01\x00").is_err());
        for cut in [5, 8, 20, 100, bytes.len() - 1] {
            assert!(decode(&bytes[..cut]).is_err(), "cut {cut}");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
        let mut bad_kind = bytes.clone();
        bad_kind[6] = 9;
        assert!(decode(&bad_kind).is_err());
        let mut bad_version = bytes;
        bad_version[4] = 2;
        assert!(decode(&bad_version).is_err());
    }
}
