//! Clutch modes and their velocity constraint matrices.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clutch state of the actuator.
///
/// The brake (`c1`) locks the spring output to the frame, the clutch (`c2`)
/// couples the spring output to the link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Mode {
    /// Both clutches open: link and spring output move freely.
    Dec = 0,
    /// Link coupled to the spring output.
    Sea = 1,
    /// Spring output braked, link free.
    Stg = 2,
    /// Spring output braked and link coupled, so both are held.
    Brk = 3,
}

const SEA_ROWS: [[f64; 2]; 1] = [[1.0, -1.0]];
const STG_ROWS: [[f64; 2]; 1] = [[1.0, 0.0]];
const BRK_ROWS: [[f64; 2]; 2] = [[1.0, 0.0], [1.0, -1.0]];

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Dec, Mode::Sea, Mode::Stg, Mode::Brk];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Mode> {
        Mode::ALL.get(id as usize).copied()
    }

    pub fn brake_engaged(self) -> bool {
        matches!(self, Mode::Stg | Mode::Brk)
    }

    pub fn clutch_engaged(self) -> bool {
        matches!(self, Mode::Sea | Mode::Brk)
    }

    pub fn from_clutches(brake: bool, clutch: bool) -> Mode {
        match (brake, clutch) {
            (false, false) => Mode::Dec,
            (false, true) => Mode::Sea,
            (true, false) => Mode::Stg,
            (true, true) => Mode::Brk,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Dec => "DEC",
            Mode::Sea => "SEA",
            Mode::Stg => "STG",
            Mode::Brk => "BRK",
        }
    }

    /// Rows of the constraint matrix acting on `[psi_dot, q_dot]`.
    pub fn constraint_rows(self) -> &'static [[f64; 2]] {
        match self {
            Mode::Dec => &[],
            Mode::Sea => &SEA_ROWS,
            Mode::Stg => &STG_ROWS,
            Mode::Brk => &BRK_ROWS,
        }
    }

    pub fn constraint_matrix(self) -> DMatrix<f64> {
        constraint_matrix(self)
    }

    /// Basis of the velocity subspace left free by the constraints.
    ///
    /// The basis vectors have disjoint support and entries in {0, 1}, so each
    /// free coordinate carries the friction of exactly the bodies it moves.
    pub fn free_directions(self) -> &'static [[f64; 2]] {
        match self {
            Mode::Dec => &[[1.0, 0.0], [0.0, 1.0]],
            Mode::Sea => &[[1.0, 1.0]],
            Mode::Stg => &[[0.0, 1.0]],
            Mode::Brk => &[],
        }
    }
}

/// Constraint matrix of `mode`: 0x2 for DEC, 1x2 for SEA and STG, 2x2 for BRK.
pub fn constraint_matrix(mode: Mode) -> DMatrix<f64> {
    let rows = mode.constraint_rows();
    DMatrix::from_fn(rows.len(), 2, |i, j| rows[i][j])
}

/// Mode-dependent linear maps derived from the constraint matrix and the
/// mass matrix `B = diag(j_psi, j_q)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeMaps {
    /// `B^-1 - B^-1 C^T (C B^-1 C^T)^-1 C B^-1`: maps generalized forces to
    /// accelerations compatible with the constraints.
    pub accel: Matrix2<f64>,
    /// `I - B^-1 C^T (C B^-1 C^T)^-1 C`: maps pre-impact velocities to
    /// post-impact velocities.
    pub reset: Matrix2<f64>,
}

impl ModeMaps {
    /// Built from the free directions `n` of the mode as
    /// `accel = sum n n^T / (n^T B n)` and `reset = sum n (B n)^T / (n^T B n)`,
    /// which equals the constraint-torque form and makes constrained
    /// components exactly zero (BRK) or exactly equal (SEA).
    pub fn new(mode: Mode, j_psi: f64, j_q: f64) -> Result<ModeMaps> {
        if !(j_psi > 0.0 && j_q > 0.0) {
            return Err(Error::SingularConstraint(mode));
        }
        let b = Matrix2::new(j_psi, 0.0, 0.0, j_q);
        let mut accel = Matrix2::zeros();
        let mut reset = Matrix2::zeros();
        for n in mode.free_directions() {
            let n = nalgebra::Vector2::new(n[0], n[1]);
            let bn = b * n;
            let m = n.dot(&bn);
            accel += n * n.transpose() / m;
            reset += n * bn.transpose() / m;
        }
        Ok(ModeMaps { accel, reset })
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        match s.trim().to_ascii_uppercase().as_str() {
            "DEC" | "0" => Ok(Mode::Dec),
            "SEA" | "1" => Ok(Mode::Sea),
            "STG" | "2" => Ok(Mode::Stg),
            "BRK" | "3" => Ok(Mode::Brk),
            other => Err(Error::InvalidInput(format!("unknown mode `{other}`"))),
        }
    }
}
