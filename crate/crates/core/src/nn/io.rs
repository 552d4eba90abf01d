//! `VCSP` parameter files: magic, version `u32`, width count `u32`, the
//! widths as `u32`, then every parameter as little-endian `f64` in layout
//! order.

use std::fs;
use std::path::Path;

use super::{NetSpec, Network, Params};
use crate::binio::{len_u32, put_f64, put_u32, Reader};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const PARAMS_MAGIC: [u8; 4] = *b"VCSP";
pub const PARAMS_VERSION: u32 = 1;

pub fn encode_params<T: Scalar>(net: &Network<T>) -> Result<Vec<u8>> {
    let widths = net.spec.widths();
    let mut out = Vec::with_capacity(12 + 4 * widths.len() + 8 * net.params.len());
    out.extend_from_slice(&PARAMS_MAGIC);
    put_u32(&mut out, PARAMS_VERSION);
    put_u32(&mut out, len_u32(widths.len(), "layer count")?);
    for &w in widths {
        put_u32(&mut out, len_u32(w, "layer width")?);
    }
    for v in &net.params.values {
        put_f64(&mut out, v.to_f64_lossy());
    }
    Ok(out)
}

pub fn decode_params<T: Scalar>(bytes: &[u8]) -> Result<Network<T>> {
    let mut r = Reader::new(bytes);
    r.magic(PARAMS_MAGIC)?;
    let version = r.u32("version")?;
    if version != PARAMS_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: PARAMS_VERSION,
        });
    }
    let count = r.u32("layer count")? as usize;
    let widths = (0..count)
        .map(|_| r.u32("layer width").map(|w| w as usize))
        .collect::<Result<Vec<_>>>()?;
    let spec = NetSpec::new(widths)?;
    let values = r.f64s(spec.num_params(), "parameters")?;
    r.finish()?;
    Network::new(
        spec,
        Params {
            values: values.into_iter().map(T::of).collect(),
        },
    )
}

pub fn write_params<T: Scalar>(net: &Network<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_params(net)?)?;
    Ok(())
}

pub fn read_params<T: Scalar>(path: impl AsRef<Path>) -> Result<Network<T>> {
    decode_params(&fs::read(path)?)
}
