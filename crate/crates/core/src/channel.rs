//! Unifilar finite-state channels.
//!
//! A channel is described by finite input, output and state alphabets, a
//! kernel `W[y][x][s] = p(y | x, s)` and a deterministic next-state table
//! `f(x, y, s)`. Input constraints are carried by an optional mask
//! `A[x][s]`; a forbidden input must receive zero probability from every
//! policy.

use serde::{Deserialize, Serialize};

use crate::digraph::Digraph;
use crate::error::{Error, Result};

/// Row-sum tolerance used when a channel is constructed.
pub const KERNEL_TOL: f64 = 1e-12;

/// Serialized channel description (the JSON file format).
///
/// `kernel` is indexed `[y][x][s]`, `next_state` is indexed `[x][y][s]`
/// and `input_mask` (optional, default all-permitted) is indexed `[x][s]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub nx: usize,
    pub ny: usize,
    pub ns: usize,
    pub kernel: Vec<Vec<Vec<f64>>>,
    pub next_state: Vec<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_mask: Option<Vec<Vec<bool>>>,
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_labels: Option<Vec<String>>,
}

impl ChannelSpec {
    /// Checks every invariant and lists all violations.
    pub fn validate(&self) -> std::result::Result<(), Vec<String>> {
        let mut errs = Vec::new();
        let (nx, ny, ns) = (self.nx, self.ny, self.ns);
        if nx == 0 || ny == 0 || ns == 0 {
            errs.push(format!("alphabet sizes must be positive (nx={nx}, ny={ny}, ns={ns})"));
            return Err(errs);
        }

        if self.kernel.len() != ny
            || self
                .kernel
                .iter()
                .any(|r| r.len() != nx || r.iter().any(|c| c.len() != ns))
        {
            errs.push(format!("kernel must have shape [{ny}][{nx}][{ns}]"));
        }
        if self.next_state.len() != nx
            || self
                .next_state
                .iter()
                .any(|r| r.len() != ny || r.iter().any(|c| c.len() != ns))
        {
            errs.push(format!("next_state must have shape [{nx}][{ny}][{ns}]"));
        }
        if let Some(mask) = &self.input_mask {
            if mask.len() != nx || mask.iter().any(|r| r.len() != ns) {
                errs.push(format!("input_mask must have shape [{nx}][{ns}]"));
            }
        }
        if let Some(labels) = &self.y_labels {
            if labels.len() != ny {
                errs.push(format!("y_labels must have {ny} entries"));
            }
        }
        if !errs.is_empty() {
            return Err(errs);
        }

        for y in 0..ny {
            for x in 0..nx {
                for s in 0..ns {
                    let w = self.kernel[y][x][s];
                    if !(0.0..=1.0).contains(&w) || !w.is_finite() {
                        errs.push(format!("kernel entry (y={y},x={x},s={s}) = {w} outside [0,1]"));
                    }
                }
            }
        }
        for x in 0..nx {
            for s in 0..ns {
                let sum: f64 = (0..ny).map(|y| self.kernel[y][x][s]).sum();
                if (sum - 1.0).abs() > KERNEL_TOL {
                    errs.push(format!("row (x={x},s={s}) sums to {sum}"));
                }
            }
        }
        for x in 0..nx {
            for y in 0..ny {
                for s in 0..ns {
                    let t = self.next_state[x][y][s];
                    if t >= ns {
                        errs.push(format!("next_state (x={x},y={y},s={s}) = {t} out of range"));
                    }
                }
            }
        }
        if let Some(mask) = &self.input_mask {
            for s in 0..ns {
                if !(0..nx).any(|x| mask[x][s]) {
                    errs.push(format!("state s={s} permits no input"));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}

/// A validated unifilar finite-state channel.
#[derive(Debug, Clone, PartialEq)]
pub struct UnifilarChannel {
    nx: usize,
    ny: usize,
    ns: usize,
    kernel: Vec<f64>,
    next: Vec<usize>,
    mask: Vec<bool>,
    name: String,
    y_labels: Option<Vec<String>>,
}

impl UnifilarChannel {
    pub fn from_spec(spec: &ChannelSpec) -> Result<Self> {
        spec.validate().map_err(Error::InvalidChannel)?;
        let (nx, ny, ns) = (spec.nx, spec.ny, spec.ns);
        let mut kernel = vec![0.0; ny * nx * ns];
        let mut next = vec![0; nx * ny * ns];
        let mut mask = vec![true; nx * ns];
        for y in 0..ny {
            for x in 0..nx {
                for s in 0..ns {
                    kernel[(y * nx + x) * ns + s] = spec.kernel[y][x][s];
                    next[(x * ny + y) * ns + s] = spec.next_state[x][y][s];
                }
            }
        }
        if let Some(m) = &spec.input_mask {
            for x in 0..nx {
                for s in 0..ns {
                    mask[x * ns + s] = m[x][s];
                }
            }
        }
        Ok(Self {
            nx,
            ny,
            ns,
            kernel,
            next,
            mask,
            name: spec.name.clone(),
            y_labels: spec.y_labels.clone(),
        })
    }

    pub fn to_spec(&self) -> ChannelSpec {
        let (nx, ny, ns) = (self.nx, self.ny, self.ns);
        let all_permitted = self.mask.iter().all(|&m| m);
        ChannelSpec {
            nx,
            ny,
            ns,
            kernel: (0..ny)
                .map(|y| (0..nx).map(|x| (0..ns).map(|s| self.prob(y, x, s)).collect()).collect())
                .collect(),
            next_state: (0..nx)
                .map(|x| (0..ny).map(|y| (0..ns).map(|s| self.next_state(x, y, s)).collect()).collect())
                .collect(),
            input_mask: (!all_permitted)
                .then(|| (0..nx).map(|x| (0..ns).map(|s| self.allowed(x, s)).collect()).collect()),
            name: self.name.clone(),
            y_labels: self.y_labels.clone(),
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn ns(&self) -> usize {
        self.ns
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn y_labels(&self) -> Option<&[String]> {
        self.y_labels.as_deref()
    }

    /// Display label of output `y`.
    pub fn y_label(&self, y: usize) -> String {
        self.y_labels
            .as_ref()
            .and_then(|l| l.get(y).cloned())
            .unwrap_or_else(|| y.to_string())
    }

    /// `p(y | x, s)`.
    #[inline]
    pub fn prob(&self, y: usize, x: usize, s: usize) -> f64 {
        self.kernel[(y * self.nx + x) * self.ns + s]
    }

    /// `f(x, y, s)`.
    #[inline]
    pub fn next_state(&self, x: usize, y: usize, s: usize) -> usize {
        self.next[(x * self.ny + y) * self.ns + s]
    }

    /// Whether input `x` is permitted in state `s`.
    #[inline]
    pub fn allowed(&self, x: usize, s: usize) -> bool {
        self.mask[x * self.ns + s]
    }

    pub fn permitted_inputs(&self, s: usize) -> Vec<usize> {
        (0..self.nx).filter(|&x| self.allowed(x, s)).collect()
    }

    /// State graph: `s -> f(x,y,s)` for permitted `x` and `W(y|x,s) > 0`.
    pub fn state_graph(&self) -> Digraph {
        let mut g = Digraph::new(self.ns);
        for s in 0..self.ns {
            for x in 0..self.nx {
                if !self.allowed(x, s) {
                    continue;
                }
                for y in 0..self.ny {
                    if self.prob(y, x, s) > 0.0 {
                        g.add_edge(s, self.next_state(x, y, s));
                    }
                }
            }
        }
        g
    }

    /// Strong connectivity of the state graph. Positive-probability
    /// reachability is used: any input distribution putting mass on a
    /// permitted `x` realizes the corresponding edge.
    pub fn is_strongly_connected(&self) -> bool {
        self.state_graph().is_strongly_connected()
    }

    /// Trapdoor channel: `y = s` with probability `p`, `y = x` otherwise;
    /// next state `s ^ x ^ y`.
    pub fn trapdoor(p: f64) -> Result<Self> {
        check_prob("p", p)?;
        let mut kernel = vec![vec![vec![0.0; 2]; 2]; 2];
        for x in 0..2 {
            for s in 0..2 {
                kernel[s][x][s] += p;
                kernel[x][x][s] += 1.0 - p;
            }
        }
        let next_state = (0..2)
            .map(|x| (0..2).map(|y| (0..2).map(|s| s ^ x ^ y).collect()).collect())
            .collect();
        Self::from_spec(&ChannelSpec {
            nx: 2,
            ny: 2,
            ns: 2,
            kernel,
            next_state,
            input_mask: None,
            name: format!("trapdoor({p})"),
            y_labels: None,
        })
    }

    /// Dicode erasure channel. Output ordering is `[-1, 0, 1, ?]`; the state
    /// is the previous input.
    pub fn dec(eps: f64) -> Result<Self> {
        check_prob("eps", eps)?;
        let mut kernel = vec![vec![vec![0.0; 2]; 2]; 4];
        for x in 0..2 {
            for s in 0..2 {
                // y index of x - s is (x - s) + 1
                let y = (x as i64 - s as i64 + 1) as usize;
                kernel[y][x][s] = 1.0 - eps;
                kernel[dec::ERASURE][x][s] = eps;
            }
        }
        let next_state = (0..2).map(|x| vec![vec![x; 2]; 4]).collect();
        Self::from_spec(&ChannelSpec {
            nx: 2,
            ny: 4,
            ns: 2,
            kernel,
            next_state,
            input_mask: None,
            name: format!("dec({eps})"),
            y_labels: Some(["-1", "0", "1", "?"].map(String::from).to_vec()),
        })
    }

    /// Binary erasure channel with a no-consecutive-ones input constraint.
    /// Output ordering is `[0, 1, ?]`; the state is the previous input and
    /// `x = 1` is masked in state `1`.
    pub fn bec_no11(eps: f64) -> Result<Self> {
        check_prob("eps", eps)?;
        let mut kernel = vec![vec![vec![0.0; 2]; 2]; 3];
        for x in 0..2 {
            for s in 0..2 {
                kernel[x][x][s] = 1.0 - eps;
                kernel[bec::ERASURE][x][s] = eps;
            }
        }
        let next_state = (0..2).map(|x| vec![vec![x; 2]; 3]).collect();
        Self::from_spec(&ChannelSpec {
            nx: 2,
            ny: 3,
            ns: 2,
            kernel,
            next_state,
            input_mask: Some(vec![vec![true, true], vec![true, false]]),
            name: format!("bec_no11({eps})"),
            y_labels: Some(["0", "1", "?"].map(String::from).to_vec()),
        })
    }
}

/// Output indices of the dicode erasure channel.
pub mod dec {
    pub const MINUS: usize = 0;
    pub const ZERO: usize = 1;
    pub const PLUS: usize = 2;
    pub const ERASURE: usize = 3;
}

/// Output indices of the constrained erasure channel.
pub mod bec {
    pub const ZERO: usize = 0;
    pub const ONE: usize = 1;
    pub const ERASURE: usize = 2;
}

fn check_prob(name: &'static str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::ParameterOutOfRange {
            name,
            value: v,
            range: "[0,1]",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> impl Iterator<Item = f64> {
        (0..=10).map(|i| i as f64 / 10.0)
    }

    #[test]
    fn trapdoor_laws() {
        let c = UnifilarChannel::trapdoor(0.0).unwrap();
        assert_eq!(c.prob(1, 1, 0), 1.0);
        assert_eq!(c.next_state(1, 1, 0), 0);

        let c = UnifilarChannel::trapdoor(0.5).unwrap();
        assert_eq!(c.prob(0, 0, 1), 0.5);
        assert_eq!(c.prob(1, 0, 1), 0.5);

        let c = UnifilarChannel::trapdoor(1.0).unwrap();
        assert_eq!(c.prob(1, 0, 1), 1.0);
        assert_eq!(c.next_state(0, 1, 1), 0);
    }

    #[test]
    fn dec_laws() {
        let c = UnifilarChannel::dec(0.5).unwrap();
        assert_eq!(c.prob(dec::PLUS, 1, 0), 0.5);
        assert_eq!(c.prob(dec::ERASURE, 1, 0), 0.5);
        let c = UnifilarChannel::dec(0.0).unwrap();
        assert_eq!(c.prob(dec::MINUS, 0, 1), 1.0);
        for eps in grid() {
            let c = UnifilarChannel::dec(eps).unwrap();
            assert_eq!(c.prob(dec::ZERO, 1, 1), 1.0 - eps);
        }
    }

    #[test]
    fn bec_mask() {
        let c = UnifilarChannel::bec_no11(0.5).unwrap();
        assert!(!c.allowed(1, 1));
        assert!(c.allowed(1, 0));
        assert_eq!(c.prob(bec::ONE, 1, 0), 0.5);
        assert_eq!(c.prob(bec::ERASURE, 1, 0), 0.5);
        assert_eq!(c.permitted_inputs(1), vec![0]);
    }

    #[test]
    fn row_sum_violation_reported() {
        let mut spec = UnifilarChannel::trapdoor(0.5).unwrap().to_spec();
        spec.kernel[0][0][0] = 0.9;
        spec.kernel[1][0][0] = 0.0;
        let errs = spec.validate().unwrap_err();
        assert!(errs.iter().any(|e| e == "row (x=0,s=0) sums to 0.9"), "{errs:?}");
    }

    #[test]
    fn every_violation_listed() {
        let mut spec = UnifilarChannel::bec_no11(0.3).unwrap().to_spec();
        spec.kernel[0][0][0] = -0.1;
        spec.input_mask = Some(vec![vec![true, false], vec![true, false]]);
        let errs = spec.validate().unwrap_err();
        assert!(errs.iter().any(|e| e.contains("outside [0,1]")));
        assert!(errs.iter().any(|e| e.contains("sums to")));
        assert!(errs.iter().any(|e| e.contains("s=1 permits no input")));
    }

    #[test]
    fn parameter_range_checked() {
        assert!(UnifilarChannel::trapdoor(1.5).is_err());
        assert!(UnifilarChannel::dec(-0.1).is_err());
        assert!(UnifilarChannel::bec_no11(2.0).is_err());
    }

    #[test]
    fn builtins_valid_and_connected_on_grid() {
        for v in grid() {
            for c in [
                UnifilarChannel::dec(v).unwrap(),
                UnifilarChannel::bec_no11(v).unwrap(),
            ] {
                for x in 0..c.nx() {
                    for s in 0..c.ns() {
                        let sum: f64 = (0..c.ny()).map(|y| c.prob(y, x, s)).sum();
                        assert!((sum - 1.0).abs() <= KERNEL_TOL);
                    }
                }
                assert!(c.is_strongly_connected(), "{}", c.name());
            }
            // at p = 0 the output equals the input and the state never moves
            let t = UnifilarChannel::trapdoor(v).unwrap();
            assert_eq!(t.is_strongly_connected(), v > 0.0, "{}", t.name());
        }
    }

    #[test]
    fn frozen_state_not_connected() {
        let spec = ChannelSpec {
            nx: 1,
            ny: 1,
            ns: 2,
            kernel: vec![vec![vec![1.0, 1.0]]],
            next_state: vec![vec![vec![0, 1]]],
            input_mask: None,
            name: "frozen".into(),
            y_labels: None,
        };
        let c = UnifilarChannel::from_spec(&spec).unwrap();
        assert!(!c.is_strongly_connected());
    }

    #[test]
    fn spec_round_trip() {
        for c in [
            UnifilarChannel::trapdoor(0.3).unwrap(),
            UnifilarChannel::dec(0.2).unwrap(),
            UnifilarChannel::bec_no11(0.7).unwrap(),
        ] {
            let json = serde_json::to_string(&c.to_spec()).unwrap();
            let back: ChannelSpec = serde_json::from_str(&json).unwrap();
            assert_eq!(UnifilarChannel::from_spec(&back).unwrap(), c);
        }
    }
}
