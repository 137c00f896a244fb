use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// One diagnostics sample. For kinetic runs `free_energy` is `F_k`, `fisher`
/// is the velocity Fisher information and the distances use x-marginals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub t: f64,
    pub mean: f64,
    pub var: f64,
    pub free_energy: f64,
    pub h_loc: f64,
    pub fisher: f64,
    pub w2_ref: f64,
    pub tv_ref: f64,
    /// Velocity variance (kinetic runs).
    pub v_var: Option<f64>,
    /// Modified functional and its quality flag (kinetic runs).
    pub modified: Option<(f64, bool)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub records: Vec<LogRecord>,
}

fn num(s: &mut String, x: f64) {
    let _ = write!(s, "{:.16e}", x);
}

impl TrajectoryLog {
    pub fn push(&mut self, r: LogRecord) {
        debug_assert!(self.records.last().map_or(true, |p| r.t > p.t));
        self.records.push(r);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn column(&self, f: impl Fn(&LogRecord) -> f64) -> Vec<f64> {
        self.records.iter().map(f).collect()
    }

    pub fn is_kinetic(&self) -> bool {
        self.records.first().map_or(false, |r| r.v_var.is_some())
    }

    pub fn to_csv(&self) -> String {
        let kinetic = self.is_kinetic();
        let mut s = String::from("t,mean,var,F,H_loc,Fisher,W2_ref,TV_ref");
        if kinetic {
            s.push_str(",v_var,L_mod,L_ok");
        }
        s.push('\n');
        for r in &self.records {
            for (k, x) in [r.t, r.mean, r.var, r.free_energy, r.h_loc, r.fisher, r.w2_ref, r.tv_ref]
                .into_iter()
                .enumerate()
            {
                if k > 0 {
                    s.push(',');
                }
                num(&mut s, x);
            }
            if kinetic {
                s.push(',');
                num(&mut s, r.v_var.unwrap_or(f64::NAN));
                let (l, ok) = r.modified.unwrap_or((f64::NAN, false));
                s.push(',');
                num(&mut s, l);
                let _ = write!(s, ",{}", ok as u8);
            }
            s.push('\n');
        }
        s
    }
}
