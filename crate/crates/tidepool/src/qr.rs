//! In-place QR factorization by modified Gram-Schmidt, written against the
//! public tensor API only. Q and R may use different dtypes and devices;
//! every conversion between them is implicit.

use std::fmt;

use tidepool_core::index::{IndexAtom, IndexExpr};
use tidepool_core::kernels::BinaryOp;
use tidepool_core::DType;

use crate::devices::{self, Device};
use crate::error::Result;
use crate::ops;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// One column of R at a time.
    Column,
    /// Whole rows of R with rank-one updates of the trailing columns.
    RankOne,
}

#[derive(Debug, Clone)]
pub struct QrConfig {
    pub variant: Variant,
    pub dtype_q: DType,
    pub device_q: Device,
    pub dtype_r: DType,
    pub device_r: Device,
    pub byteswap_q: bool,
}

impl Default for QrConfig {
    fn default() -> Self {
        QrConfig {
            variant: Variant::Column,
            dtype_q: DType::Double,
            device_q: devices::cpu(),
            dtype_r: DType::Double,
            device_r: devices::cpu(),
            byteswap_q: false,
        }
    }
}

pub struct QrReport {
    pub a: Tensor,
    pub q: Tensor,
    pub r: Tensor,
    /// Frobenius norm of Q'Q - I.
    pub orthogonality: f64,
    /// Frobenius norm of QR - A.
    pub residual: f64,
}

fn ix(atoms: Vec<IndexAtom>) -> IndexExpr {
    IndexExpr::new(atoms).expect("valid index")
}

fn col(k: usize) -> IndexExpr {
    ix(vec![IndexAtom::Colon, (k as i64).into()])
}

fn trailing_cols(k: usize) -> IndexExpr {
    ix(vec![IndexAtom::Colon, ((k as i64 + 1)..).into()])
}

/// The 5x5 demo matrix: 0..24 in column-major order plus the identity.
pub fn demo_matrix() -> Result<Tensor> {
    let a = ops::arange(25, DType::Double, &devices::cpu())?.reshape(&[5, 5])?;
    ops::binary_assign(BinaryOp::Add, &a.diag(0)?, 1)?;
    Ok(a)
}

/// Overwrite `q` (m x n) with its orthonormal factor and `r` (n x n) with
/// the upper triangular factor.
pub fn factorize(q: &Tensor, r: &Tensor, variant: Variant) -> Result<()> {
    let n = q.dims()[1];
    ops::fill(r, 0)?;
    for k in 0..n {
        let qk = q.index(&col(k))?;
        let rkk = r.index(&ix(vec![(k as i64).into(), (k as i64).into()]))?;
        ops::copy(&ops::norm(&qk, 2.0, None)?, &rkk)?;
        ops::binary_assign(BinaryOp::Divide, &qk, &rkk)?;
        if k + 1 == n {
            break;
        }
        match variant {
            Variant::Column => {
                for j in k + 1..n {
                    let qj = q.index(&col(j))?;
                    let rkj = r.index(&ix(vec![(k as i64).into(), (j as i64).into()]))?;
                    ops::copy(ops::inner(&qk, &qj)?, &rkj)?;
                    ops::binary_assign(BinaryOp::Subtract, &qj, &ops::multiply(&rkj, &qk)?)?;
                }
            }
            Variant::RankOne => {
                let rest = q.index(&trailing_cols(k))?;
                let row = r.index(&ix(vec![(k as i64).into(), ((k as i64 + 1)..).into()]))?;
                let p = ops::matmul(&qk.t(), &rest, None)?;
                ops::copy(&p.reshape(row.dims())?, &row)?;
                ops::binary_assign(BinaryOp::Subtract, &rest, &ops::outer(&qk, &row)?)?;
            }
        }
    }
    Ok(())
}

/// Factorize the demo matrix and measure the result.
pub fn run(cfg: &QrConfig) -> Result<QrReport> {
    let a = demo_matrix()?;
    let n = a.dims()[0];
    let mut q = Tensor::new(a.dims(), cfg.dtype_q, &cfg.device_q)?;
    ops::copy(&a, &q)?;
    if cfg.byteswap_q {
        q.byteswap()?;
    }
    let r = Tensor::new(&[n, n], cfg.dtype_r, &cfg.device_r)?;
    factorize(&q, &r, cfg.variant)?;

    let qtq = ops::matmul(&q.t(), &q, None)?;
    let eye = ops::identity(n, qtq.dtype(), qtq.device())?;
    let orthogonality = ops::norm(&ops::subtract(&qtq, &eye)?, 2.0, None)?.item()?.as_f64();
    let qr = ops::matmul(&q, &r, None)?;
    let residual = ops::norm(&ops::subtract(&qr, &a)?, 2.0, None)?.item()?.as_f64();
    Ok(QrReport { a, q, r, orthogonality, residual })
}

impl fmt::Display for QrReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "A =\n{}\n", self.a)?;
        writeln!(f, "Q =\n{}\n", self.q)?;
        writeln!(f, "R =\n{}\n", self.r)?;
        writeln!(f, "||Q'Q - I||_F = {:.6e}", self.orthogonality)?;
        write!(f, "||QR - A||_F  = {:.6e}", self.residual)
    }
}
