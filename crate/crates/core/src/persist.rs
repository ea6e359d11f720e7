//! Binary model file.
//!
//! Layout (little-endian): magic `LASR`, `u32` version (1), `u32` stage
//! count, `u32` latent dimension, `u32` query dimension, `u32` item count,
//! `u32` k, `u8` weight scheme tag, then for each stage the matrices `U`,
//! `V`, `S`, each as row-major `f32`.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::ModelFileError;
use crate::model::{ColumnMatrix, Model, StageParams};
use crate::scalar::Scalar;
use crate::weights::{PositionWeights, WeightScheme};

pub const MAGIC: &[u8; 4] = b"LASR";
pub const VERSION: u32 = 1;

pub fn save_model<T: Scalar>(model: &Model<T>, path: impl AsRef<Path>) -> Result<(), ModelFileError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<Model<T>, ModelFileError> {
    read_model(&mut BufReader::new(File::open(path)?))
}

pub fn write_model<T: Scalar, W: Write>(model: &Model<T>, w: &mut W) -> Result<(), ModelFileError> {
    w.write_all(MAGIC)?;
    for x in [
        VERSION,
        model.num_stages() as u32,
        model.dim() as u32,
        model.query_dim() as u32,
        model.items() as u32,
        model.k() as u32,
    ] {
        w.write_all(&x.to_le_bytes())?;
    }
    w.write_all(&[model.weights().scheme().tag()])?;
    for st in model.stages() {
        for m in [&st.u, &st.v, &st.s] {
            write_row_major(m, w)?;
        }
    }
    Ok(())
}

fn write_row_major<T: Scalar, W: Write>(m: &ColumnMatrix<T>, w: &mut W) -> io::Result<()> {
    let mut row = Vec::with_capacity(m.cols() * 4);
    for i in 0..m.rows() {
        row.clear();
        for j in 0..m.cols() {
            row.extend_from_slice(&m.get(i, j).to_disk().to_le_bytes());
        }
        w.write_all(&row)?;
    }
    Ok(())
}

fn read_exact_or_truncated<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), ModelFileError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => ModelFileError::Truncated,
        _ => ModelFileError::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, ModelFileError> {
    let mut b = [0u8; 4];
    read_exact_or_truncated(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_row_major<T: Scalar, R: Read>(
    rows: usize,
    cols: usize,
    r: &mut R,
) -> Result<ColumnMatrix<T>, ModelFileError> {
    let mut m = ColumnMatrix::zeros(rows, cols);
    let mut buf = vec![0u8; cols * 4];
    for i in 0..rows {
        read_exact_or_truncated(r, &mut buf)?;
        for (j, chunk) in buf.chunks_exact(4).enumerate() {
            let x = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
            m.set(i, j, T::from_disk(x));
        }
    }
    Ok(m)
}

pub fn read_model<T: Scalar, R: Read>(r: &mut R) -> Result<Model<T>, ModelFileError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => ModelFileError::BadMagic,
        _ => ModelFileError::Io(e),
    })?;
    if &magic != MAGIC {
        return Err(ModelFileError::BadMagic);
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(ModelFileError::UnsupportedVersion(version));
    }
    let num_stages = read_u32(r)? as usize;
    let dim = read_u32(r)? as usize;
    let query_dim = read_u32(r)? as usize;
    let items = read_u32(r)? as usize;
    let k = read_u32(r)? as usize;
    let mut tag = [0u8; 1];
    read_exact_or_truncated(r, &mut tag)?;
    let scheme = WeightScheme::from_tag(tag[0]).ok_or(ModelFileError::UnknownScheme(tag[0]))?;

    if num_stages == 0 || dim == 0 || query_dim == 0 || items == 0 || k == 0 {
        return Err(ModelFileError::DimensionMismatch(format!(
            "stages={num_stages} n={dim} D_q={query_dim} D_items={items} k={k}"
        )));
    }
    if k > items {
        return Err(ModelFileError::DimensionMismatch(format!(
            "k={k} exceeds D_items={items}"
        )));
    }

    let mut stages = Vec::with_capacity(num_stages);
    for _ in 0..num_stages {
        let u = read_row_major(dim, query_dim, r)?;
        let v = read_row_major(dim, items, r)?;
        let s = read_row_major(dim, items, r)?;
        stages.push(StageParams { u, v, s });
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(ModelFileError::DimensionMismatch(
            "trailing bytes after the last stage".into(),
        ));
    }
    let weights = PositionWeights::new(k, scheme)
        .map_err(|e| ModelFileError::DimensionMismatch(e.to_string()))?;
    Model::new(stages, weights).map_err(|e| ModelFileError::DimensionMismatch(e.to_string()))
}
