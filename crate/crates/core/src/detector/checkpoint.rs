//! Binary checkpoints: `CIRC`, version, the full detector configuration,
//! patch parameters and anchor grid, then named `f32` tensors in canonical
//! order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::network::{Detector, ParameterStore};
use super::DetectorConfig;
use crate::anchors::AnchorGrid;
use crate::binary::{put_f32, put_f64, put_u32, ByteReader};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CIRC";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained detector with the patch parameters it was trained on.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub detector: Detector,
    pub k: usize,
    pub eta0: f64,
}

impl Checkpoint {
    /// Fails unless the stored configuration and grid equal the given ones.
    pub fn expect(&self, config: &DetectorConfig, grid: &AnchorGrid) -> Result<()> {
        if self.detector.config() != config {
            return Err(Error::FormatMismatch(format!(
                "checkpoint config {:?} differs from {config:?}",
                self.detector.config()
            )));
        }
        if self.detector.grid() != grid {
            return Err(Error::FormatMismatch(format!(
                "checkpoint grid {:?} differs from {grid:?}",
                self.detector.grid()
            )));
        }
        Ok(())
    }
}

fn put_list(w: &mut impl Write, v: &[usize]) -> Result<()> {
    put_u32(w, v.len())?;
    for &x in v {
        put_u32(w, x)?;
    }
    Ok(())
}

pub fn write_checkpoint(w: &mut impl Write, detector: &Detector, k: usize, eta0: f64) -> Result<()> {
    let c = detector.config();
    w.write_all(CHECKPOINT_MAGIC)?;
    put_u32(w, CHECKPOINT_VERSION as usize)?;
    put_u32(w, c.pe_levels)?;
    put_u32(w, c.depth_multiplier)?;
    put_list(w, &c.point_widths)?;
    put_u32(w, c.conv_width)?;
    put_list(w, &c.head_widths)?;
    put_u32(w, c.anchors)?;
    put_u32(w, c.slots)?;
    for v in [c.lambda, c.neg_ratio, c.learning_rate, c.decay_factor] {
        put_f64(w, v)?;
    }
    w.write_all(&c.decay_every.to_le_bytes())?;
    put_u32(w, k)?;
    put_f64(w, eta0)?;
    let g = detector.grid();
    for v in [g.delta_rho, g.delta_theta, g.delta_phi, g.max_radius] {
        put_f64(w, v)?;
    }
    let params = detector.parameters();
    put_u32(w, params.len())?;
    for (name, t) in params.iter() {
        put_u32(w, name.len())?;
        w.write_all(name.as_bytes())?;
        put_u32(w, 2)?;
        put_u32(w, t.nrows())?;
        put_u32(w, t.ncols())?;
        for &v in t.iter() {
            put_f32(w, v)?;
        }
    }
    Ok(())
}

pub fn save_checkpoint(path: impl AsRef<Path>, detector: &Detector, k: usize, eta0: f64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, detector, k, eta0)?;
    w.flush()?;
    Ok(())
}

fn list(rd: &mut ByteReader<impl Read>) -> Result<Vec<usize>> {
    let n = rd.u32()?;
    (0..n).map(|_| rd.u32()).collect()
}

pub fn read_checkpoint(r: impl Read) -> Result<Checkpoint> {
    let mut rd = ByteReader::new(r);
    if &rd.bytes::<4>()? != CHECKPOINT_MAGIC {
        return Err(Error::ParseBinary { offset: 0, message: "bad magic, expected CIRC".into() });
    }
    let version = rd.u32()?;
    if version != CHECKPOINT_VERSION as usize {
        return Err(Error::ParseBinary { offset: 4, message: format!("unsupported version {version}") });
    }
    let pe_levels = rd.u32()?;
    let depth_multiplier = rd.u32()?;
    let point_widths = list(&mut rd)?;
    let conv_width = rd.u32()?;
    let head_widths = list(&mut rd)?;
    let anchors = rd.u32()?;
    let slots = rd.u32()?;
    let (lambda, neg_ratio, learning_rate, decay_factor) = (rd.f64()?, rd.f64()?, rd.f64()?, rd.f64()?);
    let decay_every = u64::from_le_bytes(rd.bytes()?);
    let config = DetectorConfig {
        pe_levels,
        depth_multiplier,
        point_widths,
        conv_width,
        head_widths,
        anchors,
        slots,
        lambda,
        neg_ratio,
        learning_rate,
        decay_factor,
        decay_every,
    };
    config.validate()?;
    let k = rd.u32()?;
    let eta0 = rd.f64()?;
    let grid = AnchorGrid::new(rd.f64()?, rd.f64()?, rd.f64()?, rd.f64()?)?;
    let count = rd.u32()?;
    let expected = ParameterStore::layout(&config);
    if count != expected.len() {
        return Err(Error::FormatMismatch(format!(
            "config implies {} tensors, checkpoint has {count}",
            expected.len()
        )));
    }
    let mut named = Vec::with_capacity(count);
    for (want, shape) in &expected {
        let at = rd.offset;
        let len = rd.u32()?;
        if len > 256 {
            return Err(Error::ParseBinary { offset: at, message: format!("tensor name length {len}") });
        }
        let mut name = vec![0u8; len];
        for b in name.iter_mut() {
            *b = rd.bytes::<1>()?[0];
        }
        let name = String::from_utf8(name)
            .map_err(|_| Error::ParseBinary { offset: at, message: "tensor name is not utf8".into() })?;
        let rank = rd.u32()?;
        let dims = (0..rank).map(|_| rd.u32()).collect::<Result<Vec<_>>>()?;
        if &name != want || dims != [shape.0, shape.1] {
            return Err(Error::FormatMismatch(format!(
                "tensor {name} {dims:?} does not match expected {want} {shape:?}"
            )));
        }
        let data = (0..shape.0 * shape.1).map(|_| rd.f32()).collect::<Result<Vec<_>>>()?;
        named.push((name, Array2::from_shape_vec(*shape, data).expect("shape checked")));
    }
    let params = ParameterStore::from_tensors(&config, named)?;
    let detector = Detector::with_parameters(config, grid, params)?;
    Ok(Checkpoint { detector, k, eta0 })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
