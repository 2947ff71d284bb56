//! Discrete-time linear plant `x' = A x + B u + w`, `y = C x + v` with
//! zero-mean Gaussian process and measurement noise.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{check_len, check_pd, check_psd, check_shape, check_square};

/// Per-step matrix schedule. A constant schedule broadcasts over every step.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    Constant(DMatrix<f64>),
    Varying(Vec<DMatrix<f64>>),
}

impl Schedule {
    pub fn at(&self, k: usize) -> Option<&DMatrix<f64>> {
        match self {
            Schedule::Constant(m) => Some(m),
            Schedule::Varying(ms) => ms.get(k),
        }
    }

    /// Number of steps covered, `None` for a broadcast schedule.
    pub fn len(&self) -> Option<usize> {
        match self {
            Schedule::Constant(_) => None,
            Schedule::Varying(ms) => Some(ms.len()),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == Some(0)
    }

    fn iter(&self) -> Box<dyn Iterator<Item = &DMatrix<f64>> + '_> {
        match self {
            Schedule::Constant(m) => Box::new(std::iter::once(m)),
            Schedule::Varying(ms) => Box::new(ms.iter()),
        }
    }
}

impl From<DMatrix<f64>> for Schedule {
    fn from(m: DMatrix<f64>) -> Self {
        Schedule::Constant(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    n: usize,
    m: usize,
    ny: usize,
    a: Schedule,
    b: Schedule,
    c: Schedule,
    q: Schedule,
    r: Schedule,
}

impl LinearSystem {
    /// Validates dimensions and noise covariances. `Q_k` must be PSD and
    /// `R_k` positive definite for every scheduled step.
    pub fn new(
        a: impl Into<Schedule>,
        b: impl Into<Schedule>,
        c: impl Into<Schedule>,
        q: impl Into<Schedule>,
        r: impl Into<Schedule>,
    ) -> Result<Self> {
        let (a, b, c, q, r) = (a.into(), b.into(), c.into(), q.into(), r.into());
        let first = |s: &Schedule, name: &str| -> Result<DMatrix<f64>> {
            s.at(0)
                .cloned()
                .ok_or_else(|| Error::Config(format!("{name} schedule is empty")))
        };
        let a0 = first(&a, "A")?;
        let b0 = first(&b, "B")?;
        let c0 = first(&c, "C")?;
        let n = a0.nrows();
        let m = b0.ncols();
        let ny = c0.nrows();
        if n == 0 || m == 0 || ny == 0 {
            return Err(Error::Config(
                "state, input and output dimensions must be positive".into(),
            ));
        }
        for ak in a.iter() {
            check_square("A", ak, n)?;
        }
        for bk in b.iter() {
            check_shape("B", bk, n, m)?;
        }
        for ck in c.iter() {
            check_shape("C", ck, ny, n)?;
        }
        for qk in q.iter() {
            check_square("Q", qk, n)?;
            check_psd("Q", qk)?;
        }
        for rk in r.iter() {
            check_square("R", rk, ny)?;
            check_pd("R", rk)?;
        }
        Ok(Self {
            n,
            m,
            ny,
            a,
            b,
            c,
            q,
            r,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn output_dim(&self) -> usize {
        self.ny
    }

    /// Last step index (exclusive) covered by every time-varying schedule.
    pub fn schedule_len(&self) -> Option<usize> {
        [&self.a, &self.b, &self.c, &self.q, &self.r]
            .iter()
            .filter_map(|s| s.len())
            .min()
    }

    fn pick<'a>(&self, s: &'a Schedule, name: &'static str, k: usize) -> Result<&'a DMatrix<f64>> {
        s.at(k).ok_or_else(|| {
            Error::Config(format!(
                "step {k} is beyond the {name} schedule ({} steps)",
                s.len().unwrap_or(0)
            ))
        })
    }

    pub fn a(&self, k: usize) -> Result<&DMatrix<f64>> {
        self.pick(&self.a, "A", k)
    }

    pub fn b(&self, k: usize) -> Result<&DMatrix<f64>> {
        self.pick(&self.b, "B", k)
    }

    pub fn c(&self, k: usize) -> Result<&DMatrix<f64>> {
        self.pick(&self.c, "C", k)
    }

    pub fn q(&self, k: usize) -> Result<&DMatrix<f64>> {
        self.pick(&self.q, "Q", k)
    }

    pub fn r(&self, k: usize) -> Result<&DMatrix<f64>> {
        self.pick(&self.r, "R", k)
    }

    pub fn schedules(&self) -> [&Schedule; 5] {
        [&self.a, &self.b, &self.c, &self.q, &self.r]
    }

    /// `A_k x + B_k u + w`.
    pub fn dynamics_step(
        &self,
        k: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
        w: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        check_len("state", x, self.n)?;
        check_len("input", u, self.m)?;
        check_len("process noise", w, self.n)?;
        Ok(self.a(k)? * x + self.b(k)? * u + w)
    }

    /// `C_k x + v`.
    pub fn measure(&self, k: usize, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("state", x, self.n)?;
        check_len("measurement noise", v, self.ny)?;
        Ok(self.c(k)? * x + v)
    }
}
