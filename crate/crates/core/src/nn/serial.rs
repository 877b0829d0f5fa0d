//! Network parameter files.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic "CGPNET" | version u32 = 1 | output activation u8 (0 identity, 1 tanh)
//! | layer count + 1 as u64 | layer sizes as u64 each
//! | per layer: weights row-major [fan_in × fan_out] f64, then bias f64
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DenseNet, OutputActivation};
use crate::error::{Error, Result};
use crate::format::*;

const MAGIC: &[u8; 6] = b"CGPNET";
const VERSION: u32 = 1;
const MAX_DIM: u64 = 1 << 20;

impl DenseNet {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        write_header(w, MAGIC, VERSION)?;
        write_u8(w, self.output.code())?;
        write_u64(w, self.sizes.len() as u64)?;
        for &s in &self.sizes {
            write_u64(w, s as u64)?;
        }
        write_f64s(w, self.flat_params())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        read_header(r, MAGIC, VERSION)?;
        let code = read_u8(r)?;
        let output = OutputActivation::from_code(code)
            .ok_or_else(|| Error::Format(format!("unknown output activation code {code}")))?;
        let n = read_usize(r, "layer size count", 64)?;
        let sizes = (0..n)
            .map(|_| read_usize(r, "layer size", MAX_DIM))
            .collect::<Result<Vec<_>>>()?;
        let mut net = DenseNet::zeros(&sizes, output)?;
        let params = read_f64s(r, net.num_params())?;
        net.set_flat_params(&params)?;
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        DenseNet::read_from(&mut BufReader::new(File::open(path)?))
    }
}
