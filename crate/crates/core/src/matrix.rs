//! Dense FP32 matrices and 4-D tensors, plus the on-disk container formats
//! (binary: magic + dims + dtype + row-major values; CSV for small tests).

use crate::error::{SimError, SimResult};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    RowMajor,
    ColMajor,
}

/// Dense FP32 matrix. `data` is stored in the declared layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub layout: Layout,
    pub data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            layout: Layout::RowMajor,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<f32>) -> SimResult<Matrix> {
        if data.len() != rows * cols {
            return Err(SimError::Dimension(format!(
                "matrix buffer length {} != {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Matrix {
            rows,
            cols,
            layout: Layout::RowMajor,
            data,
        })
    }

    pub fn with_layout(
        rows: usize,
        cols: usize,
        layout: Layout,
        data: Vec<f32>,
    ) -> SimResult<Matrix> {
        if data.len() != rows * cols {
            return Err(SimError::Dimension(format!(
                "matrix buffer length {} != {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Matrix {
            rows,
            cols,
            layout,
            data,
        })
    }

    pub fn identity(n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f32 {
        match self.layout {
            Layout::RowMajor => self.data[r * self.cols + c],
            Layout::ColMajor => self.data[c * self.rows + r],
        }
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        match self.layout {
            Layout::RowMajor => self.data[r * self.cols + c] = v,
            Layout::ColMajor => self.data[c * self.rows + r] = v,
        }
    }

    /// Contiguous row-major copy of the values; engines hoist this out of
    /// their inner loops.
    pub fn to_row_major(&self) -> Vec<f32> {
        match self.layout {
            Layout::RowMajor => self.data.clone(),
            Layout::ColMajor => {
                let mut out = vec![0.0; self.rows * self.cols];
                for r in 0..self.rows {
                    for c in 0..self.cols {
                        out[r * self.cols + c] = self.data[c * self.rows + r];
                    }
                }
                out
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

const MAGIC: &[u8; 4] = b"SMX1";
const DTYPE_F32: u32 = 0;

/// Writes the documented binary container: magic `SMX1`, u32 dtype (0 =
/// f32), u64 rows, u64 cols, then row-major little-endian values.
pub fn write_matrix(path: &Path, m: &Matrix) -> SimResult<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(MAGIC)?;
    f.write_all(&DTYPE_F32.to_le_bytes())?;
    f.write_all(&(m.rows as u64).to_le_bytes())?;
    f.write_all(&(m.cols as u64).to_le_bytes())?;
    for v in m.to_row_major() {
        f.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_matrix(path: &Path) -> SimResult<Matrix> {
    let mut f = std::fs::File::open(path)?;
    let mut head = [0u8; 4 + 4 + 8 + 8];
    f.read_exact(&mut head)?;
    if &head[0..4] != MAGIC {
        return Err(SimError::Parse("bad matrix container magic".into()));
    }
    let dtype = u32::from_le_bytes(head[4..8].try_into().unwrap());
    if dtype != DTYPE_F32 {
        return Err(SimError::Parse(format!("unsupported dtype {dtype}")));
    }
    let rows = u64::from_le_bytes(head[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(head[16..24].try_into().unwrap()) as usize;
    let mut bytes = vec![0u8; rows * cols * 4];
    f.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Matrix::from_rows(rows, cols, data)
}

/// Reads a small matrix from CSV (one row per line, comma separated).
pub fn read_csv_matrix(text: &str) -> SimResult<Matrix> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let vals: Result<Vec<f32>, _> = line.split(',').map(|s| s.trim().parse()).collect();
        let vals = vals.map_err(|e| SimError::Parse(format!("csv: {e}")))?;
        match cols {
            None => cols = Some(vals.len()),
            Some(c) if c != vals.len() => {
                return Err(SimError::Parse("csv: ragged rows".into()));
            }
            _ => {}
        }
        data.extend_from_slice(&vals);
        rows += 1;
    }
    Matrix::from_rows(rows, cols.unwrap_or(0), data)
}

/// NCHW 4-D tensor used by the convolution oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    /// [batch, channels, height, width]
    pub dims: [usize; 4],
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(dims: [usize; 4]) -> Tensor {
        Tensor {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn new(dims: [usize; 4], data: Vec<f32>) -> SimResult<Tensor> {
        if data.len() != dims.iter().product::<usize>() {
            return Err(SimError::Shape(format!(
                "tensor buffer length {} != {:?}",
                data.len(),
                dims
            )));
        }
        Ok(Tensor { dims, data })
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, h: usize, w: usize) -> f32 {
        let [_, cs, hs, ws] = self.dims;
        self.data[((n * cs + c) * hs + h) * ws + w]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, v: f32) {
        let [_, cs, hs, ws] = self.dims;
        self.data[((n * cs + c) * hs + h) * ws + w] = v;
    }
}
