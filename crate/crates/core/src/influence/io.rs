//! CSV datasets and the "TIPM" (model) / "TIPP" (projection) checkpoints.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::kfac::{LayerProjection, ProjectionOperator};
use super::model::{Activation, Dense, Example, Head, Model};
use super::InfluenceError;
use crate::codec::{Reader, Truncated, Writer};

pub const MODEL_MAGIC: &[u8; 4] = b"TIPM";
pub const PROJECTION_MAGIC: &[u8; 4] = b"TIPP";
pub const CHECKPOINT_VERSION: u16 = 1;

impl From<Truncated> for InfluenceError {
    fn from(e: Truncated) -> Self {
        InfluenceError::Malformed(e.0)
    }
}

/// Header row, feature columns, then the label column.
pub fn read_dataset(path: &Path) -> Result<Vec<Example>, InfluenceError> {
    let mut reader = csv::Reader::from_path(path)?;
    read_records(&mut reader)
}

pub fn parse_dataset(text: &str) -> Result<Vec<Example>, InfluenceError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    read_records(&mut reader)
}

fn read_records<R: std::io::Read>(reader: &mut csv::Reader<R>) -> Result<Vec<Example>, InfluenceError> {
    let width = reader.headers()?.len();
    if width < 2 {
        return Err(InfluenceError::Malformed(
            "need at least one feature and a label column".into(),
        ));
    }
    let mut out = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let values = record
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| InfluenceError::Malformed(format!("row {}: {e}", line + 1)))?;
        let (label, features) = values.split_last().expect("width checked");
        out.push(Example::new(features.to_vec(), *label));
    }
    Ok(out)
}

pub fn write_dataset(path: &Path, data: &[Example]) -> Result<(), InfluenceError> {
    let mut w = csv::Writer::from_path(path)?;
    let d = data.first().map_or(0, |z| z.features.len());
    let mut header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for z in data {
        let mut row: Vec<String> = z.features.iter().map(|v| format!("{v:.17e}")).collect();
        row.push(format!("{}", z.label));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn header(w: &mut Writer, magic: &[u8; 4]) {
    w.bytes(magic).u16(CHECKPOINT_VERSION);
}

fn check_header(r: &mut Reader<'_>, magic: &[u8; 4]) -> Result<(), InfluenceError> {
    if r.take(4)? != magic {
        return Err(InfluenceError::Malformed("bad magic".into()));
    }
    let v = r.u16()?;
    if v != CHECKPOINT_VERSION {
        return Err(InfluenceError::Malformed(format!("checkpoint version {v}")));
    }
    Ok(())
}

fn write_matrix(w: &mut Writer, m: &DMatrix<f64>) {
    w.u32(m.nrows() as u32).u32(m.ncols() as u32);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.f64(m[(i, j)]);
        }
    }
}

fn read_matrix(r: &mut Reader<'_>) -> Result<DMatrix<f64>, InfluenceError> {
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let n = rows
        .checked_mul(cols)
        .filter(|&n| n <= r.remaining() / 8)
        .ok_or_else(|| InfluenceError::Malformed("matrix size".into()))?;
    Ok(DMatrix::from_row_slice(rows, cols, &r.f64s(n)?))
}

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::ReLU => 0,
        Activation::Identity => 1,
        Activation::Sigmoid => 2,
    }
}

fn head_code(h: Head) -> u8 {
    match h {
        Head::BinaryLogistic => 0,
        Head::Softmax => 1,
        Head::SquaredError => 2,
    }
}

pub fn serialize_model(model: &Model) -> Vec<u8> {
    let mut w = Writer::new();
    header(&mut w, MODEL_MAGIC);
    w.u8(activation_code(model.activation))
        .u8(head_code(model.head))
        .u8(model.theta_hat as u8)
        .f64(model.l2)
        .u32(model.layers.len() as u32);
    for layer in &model.layers {
        write_matrix(&mut w, &layer.weights);
        w.u32(layer.bias.len() as u32).f64s(layer.bias.as_slice());
    }
    w.finish()
}

pub fn deserialize_model(bytes: &[u8]) -> Result<Model, InfluenceError> {
    let mut r = Reader::new(bytes);
    check_header(&mut r, MODEL_MAGIC)?;
    let activation = match r.u8()? {
        0 => Activation::ReLU,
        1 => Activation::Identity,
        2 => Activation::Sigmoid,
        c => return Err(InfluenceError::Malformed(format!("activation code {c}"))),
    };
    let head = match r.u8()? {
        0 => Head::BinaryLogistic,
        1 => Head::Softmax,
        2 => Head::SquaredError,
        c => return Err(InfluenceError::Malformed(format!("head code {c}"))),
    };
    let theta_hat = r.u8()? != 0;
    let l2 = r.f64()?;
    let count = r.u32()? as usize;
    let mut layers = Vec::new();
    for _ in 0..count {
        let weights = read_matrix(&mut r)?;
        let nb = r.u32()? as usize;
        if nb != weights.nrows() {
            return Err(InfluenceError::Malformed("bias length".into()));
        }
        let bias = DVector::from_vec(r.f64s(nb)?);
        layers.push(Dense { weights, bias });
    }
    r.finish()?;
    if layers.is_empty() || layers.windows(2).any(|w| w[0].d_out() != w[1].d_in()) {
        return Err(InfluenceError::Malformed("layer dimensions do not chain".into()));
    }
    Ok(Model {
        layers,
        activation,
        head,
        l2,
        theta_hat,
    })
}

pub fn serialize_projection(proj: &ProjectionOperator) -> Vec<u8> {
    let mut w = Writer::new();
    header(&mut w, PROJECTION_MAGIC);
    w.u32(proj.layers.len() as u32);
    for l in &proj.layers {
        write_matrix(&mut w, &l.p_in);
        write_matrix(&mut w, &l.p_out);
    }
    w.finish()
}

pub fn deserialize_projection(bytes: &[u8]) -> Result<ProjectionOperator, InfluenceError> {
    let mut r = Reader::new(bytes);
    check_header(&mut r, PROJECTION_MAGIC)?;
    let count = r.u32()? as usize;
    let mut layers = Vec::new();
    for _ in 0..count {
        let p_in = read_matrix(&mut r)?;
        let p_out = read_matrix(&mut r)?;
        layers.push(LayerProjection { p_in, p_out });
    }
    r.finish()?;
    Ok(ProjectionOperator { layers })
}
