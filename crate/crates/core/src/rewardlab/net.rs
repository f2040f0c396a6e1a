//! Reward networks: a shared trunk whose last linear layer holds the heads,
//! plus an optional meta-voter for the sequential architecture.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradkit::{serial, Activation, Mlp, NumArray};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    /// One scalar head trained on the weighted score.
    Single,
    /// Help and harm heads trained first, then frozen; a meta-voter maps
    /// the two head outputs to the weighted score.
    Sequential,
    /// Help, harm and weighted heads trained jointly.
    Parallel,
}

impl RewardKind {
    pub const ALL: [RewardKind; 3] = [RewardKind::Single, RewardKind::Sequential, RewardKind::Parallel];

    pub fn name(self) -> &'static str {
        match self {
            RewardKind::Single => "single",
            RewardKind::Sequential => "sequential",
            RewardKind::Parallel => "parallel",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "single" => Ok(RewardKind::Single),
            "sequential" => Ok(RewardKind::Sequential),
            "parallel" => Ok(RewardKind::Parallel),
            other => Err(Error::InvalidParameter(format!(
                "unknown reward architecture `{other}`"
            ))),
        }
    }

    fn trunk_heads(self) -> usize {
        match self {
            RewardKind::Single => 1,
            RewardKind::Sequential => 2,
            RewardKind::Parallel => 3,
        }
    }

    /// Number of scores `score` returns.
    pub fn output_dim(self) -> usize {
        match self {
            RewardKind::Single => 1,
            _ => 3,
        }
    }

    /// Position of the weighted score in the output vector.
    pub fn weighted_index(self) -> usize {
        self.output_dim() - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetDims {
    pub input_dim: usize,
    /// Hidden widths of the backbone.
    pub hidden: Vec<usize>,
    /// Hidden width of the sequential meta-voter.
    pub voter_hidden: usize,
    pub activation: Activation,
}

impl Default for NetDims {
    fn default() -> Self {
        Self {
            input_dim: 12,
            hidden: vec![32],
            voter_hidden: 8,
            activation: Activation::Relu,
        }
    }
}

/// A reward model. The trunk is an `Mlp` of widths
/// `[input, hidden.., heads]`: every layer but the last forms the backbone
/// and the last (linear) layer holds one row per head.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardNet {
    kind: RewardKind,
    trunk: Mlp,
    voter: Option<Mlp>,
    /// Per-parameter trainability over `trunk ++ voter`.
    trainable: Vec<bool>,
}

/// Forward state for one batch, consumed by [`RewardNet::backward`].
pub struct NetTrace {
    trunk: crate::gradkit::Trace,
    voter: Option<crate::gradkit::Trace>,
    outputs: Vec<f64>,
    rows: usize,
}

impl NetTrace {
    /// Row-major `rows x output_dim` scores.
    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
}

/// Initializes a network deterministically from `seed`.
pub fn build(kind: RewardKind, dims: &NetDims, seed: u64) -> Result<RewardNet> {
    if dims.input_dim == 0 || dims.hidden.contains(&0) {
        return Err(Error::InvalidParameter("reward net widths must be positive".into()));
    }
    let mut widths = vec![dims.input_dim];
    widths.extend(&dims.hidden);
    widths.push(kind.trunk_heads());
    let trunk = Mlp::new(&widths, dims.activation, &mut stream(seed, "rewardlab/init", 0))?;
    let voter = if kind == RewardKind::Sequential {
        if dims.voter_hidden == 0 {
            return Err(Error::InvalidParameter("voter_hidden must be positive".into()));
        }
        Some(Mlp::new(
            &[2, dims.voter_hidden, 1],
            dims.activation,
            &mut stream(seed, "rewardlab/init", 1),
        )?)
    } else {
        None
    };
    let n = trunk.param_count() + voter.as_ref().map_or(0, Mlp::param_count);
    Ok(RewardNet {
        kind,
        trunk,
        voter,
        trainable: vec![true; n],
    })
}

impl RewardNet {
    pub fn kind(&self) -> RewardKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn trunk(&self) -> &Mlp {
        &self.trunk
    }

    pub fn voter(&self) -> Option<&Mlp> {
        self.voter.as_ref()
    }

    pub fn param_count(&self) -> usize {
        self.trainable.len()
    }

    /// Backbone parameters: every trunk layer except the heads.
    pub fn backbone_params(&self) -> &[f64] {
        let heads = self.trunk.num_layers() - 1;
        let w = self.trunk.widths();
        let n: usize = (0..heads).map(|l| w[l] * w[l + 1] + w[l + 1]).sum();
        &self.trunk.params()[..n]
    }

    /// Concatenated `trunk ++ voter` parameters.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.trunk.params().to_vec();
        if let Some(v) = &self.voter {
            p.extend_from_slice(v.params());
        }
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::dim("RewardNet::set_params", self.param_count(), params.len()));
        }
        let nt = self.trunk.param_count();
        self.trunk.set_params(&params[..nt])?;
        if let Some(v) = &mut self.voter {
            v.set_params(&params[nt..])?;
        }
        Ok(())
    }

    pub fn trainable(&self) -> &[bool] {
        &self.trainable
    }

    /// Freezes or unfreezes the whole trunk (backbone and heads).
    pub fn set_trunk_trainable(&mut self, on: bool) {
        let nt = self.trunk.param_count();
        self.trainable[..nt].iter_mut().for_each(|t| *t = on);
    }

    pub fn set_voter_trainable(&mut self, on: bool) {
        let nt = self.trunk.param_count();
        self.trainable[nt..].iter_mut().for_each(|t| *t = on);
    }

    /// Scores one feature vector.
    pub fn score(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.input_dim() {
            return Err(Error::dim("RewardNet::score", self.input_dim(), features.len()));
        }
        let t = self.trunk.forward_one(features)?;
        match &self.voter {
            Some(v) => {
                let w = v.forward_one(&t)?;
                Ok(vec![t[0], t[1], w[0]])
            }
            None => Ok(t),
        }
    }

    /// Scores a batch of rows (`rows x input_dim`).
    pub fn score_batch(&self, features: &NumArray) -> Result<NumArray> {
        let tr = self.forward_trace(features)?;
        NumArray::matrix(tr.rows, self.kind.output_dim(), tr.outputs)
    }

    pub fn forward_trace(&self, features: &NumArray) -> Result<NetTrace> {
        if features.ndim() != 2 {
            return Err(Error::dim("RewardNet batch rank", 2, features.ndim()));
        }
        let rows = features.rows();
        let trunk = self.trunk.forward_trace(features)?;
        let t_out = trunk.output();
        let (voter, outputs) = match &self.voter {
            Some(v) => {
                let vin = NumArray::matrix(rows, 2, t_out.to_vec())?;
                let vt = v.forward_trace(&vin)?;
                let mut out = Vec::with_capacity(rows * 3);
                for r in 0..rows {
                    out.extend_from_slice(&[t_out[2 * r], t_out[2 * r + 1], vt.output()[r]]);
                }
                (Some(vt), out)
            }
            None => (None, t_out.to_vec()),
        };
        Ok(NetTrace {
            trunk,
            voter,
            outputs,
            rows,
        })
    }

    /// Parameter gradient (over `trunk ++ voter`) for a gradient on the
    /// traced outputs. Frozen entries are still reported; the optimizer
    /// applies the mask.
    pub fn backward(&self, trace: &NetTrace, grad_out: &[f64]) -> Result<Vec<f64>> {
        let k = self.kind.output_dim();
        if grad_out.len() != trace.rows * k {
            return Err(Error::dim("RewardNet::backward", trace.rows * k, grad_out.len()));
        }
        match (&self.voter, &trace.voter) {
            (Some(v), Some(vt)) => {
                let gv: Vec<f64> = (0..trace.rows).map(|r| grad_out[3 * r + 2]).collect();
                let (vp, vin) = v.backward(vt, &gv)?;
                let mut gt = Vec::with_capacity(trace.rows * 2);
                for r in 0..trace.rows {
                    gt.push(grad_out[3 * r] + vin[2 * r]);
                    gt.push(grad_out[3 * r + 1] + vin[2 * r + 1]);
                }
                let (mut g, _) = self.trunk.backward(&trace.trunk, &gt)?;
                g.extend(vp);
                Ok(g)
            }
            _ => Ok(self.trunk.backward(&trace.trunk, grad_out)?.0),
        }
    }

    /// Text checkpoint: a kind line followed by each component in the
    /// `mlp v1` format.
    pub fn to_text(&self) -> String {
        let mut out = format!("reward v1\nkind {}\n", self.kind.name());
        out.push_str(&serial::to_text(&self.trunk));
        if let Some(v) = &self.voter {
            out.push_str("voter\n");
            out.push_str(&serial::to_text(v));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("reward v1") {
            return Err(Error::Parse("line 1: expected `reward v1`".into()));
        }
        let kind = lines
            .next()
            .and_then(|l| l.strip_prefix("kind "))
            .ok_or_else(|| Error::Parse("line 2: expected `kind <name>`".into()))
            .and_then(|k| RewardKind::from_name(k.trim()).map_err(|e| Error::Parse(e.to_string())))?;
        let rest: Vec<&str> = lines.collect();
        let split = rest.iter().position(|l| l.trim() == "voter");
        let (trunk_txt, voter_txt) = match split {
            Some(i) => (rest[..i].join("\n"), Some(rest[i + 1..].join("\n"))),
            None => (rest.join("\n"), None),
        };
        let trunk = serial::from_text(&trunk_txt)?;
        let voter = voter_txt.map(|t| serial::from_text(&t)).transpose()?;
        if trunk.output_dim() != kind.trunk_heads() || voter.is_some() != (kind == RewardKind::Sequential) {
            return Err(Error::Parse(format!("components do not match kind `{}`", kind.name())));
        }
        let n = trunk.param_count() + voter.as_ref().map_or(0, Mlp::param_count);
        Ok(Self {
            kind,
            trunk,
            voter,
            trainable: vec![true; n],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradkit::grad_check;

    fn dims(d: usize) -> NetDims {
        NetDims {
            input_dim: d,
            ..NetDims::default()
        }
    }

    #[test]
    fn single_param_count() {
        let d = 12;
        let net = build(RewardKind::Single, &dims(d), 0).unwrap();
        assert_eq!(net.param_count(), d * 32 + 32 + 32 + 1);
    }

    #[test]
    fn output_shapes() {
        let x = vec![0.3; 12];
        for kind in RewardKind::ALL {
            let net = build(kind, &dims(12), 1).unwrap();
            assert_eq!(net.score(&x).unwrap().len(), kind.output_dim());
        }
    }

    #[test]
    fn same_seed_same_params() {
        for kind in RewardKind::ALL {
            let a = build(kind, &dims(5), 9).unwrap();
            let b = build(kind, &dims(5), 9).unwrap();
            assert_eq!(a.to_text(), b.to_text());
        }
    }

    #[test]
    fn dimension_mismatch() {
        let net = build(RewardKind::Parallel, &dims(4), 0).unwrap();
        assert!(matches!(net.score(&[1.0; 3]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn batch_matches_single_rows() {
        let net = build(RewardKind::Sequential, &dims(3), 2).unwrap();
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|i| vec![i as f64 * 0.3 - 0.5, 0.2, -0.1 * i as f64])
            .collect();
        let batch = net.score_batch(&NumArray::from_rows(&rows).unwrap()).unwrap();
        for (i, r) in rows.iter().enumerate() {
            let one = net.score(r).unwrap();
            for (a, b) in one.iter().zip(batch.row(i)) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        for kind in RewardKind::ALL {
            let net = build(kind, &dims(4), 3).unwrap();
            let back = RewardNet::from_text(&net.to_text()).unwrap();
            assert_eq!(back.params(), net.params());
            assert_eq!(back.kind(), kind);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|i| vec![0.4 * i as f64 - 0.7, 0.3, 0.9 - 0.2 * i as f64])
            .collect();
        let x = NumArray::from_rows(&rows).unwrap();
        let mut dims = dims(3);
        dims.activation = Activation::Tanh;
        for kind in RewardKind::ALL {
            let net = build(kind, &dims, 5).unwrap();
            let k = kind.output_dim();
            // loss = sum_i c_i * out_i with fixed coefficients
            let coef: Vec<f64> = (0..4 * k).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.3).collect();
            let p0 = NumArray::vector(net.params());
            let report = grad_check(
                |p| {
                    let mut n = net.clone();
                    n.set_params(p.data())?;
                    let tr = n.forward_trace(&x)?;
                    let v = tr.outputs().iter().zip(&coef).map(|(a, c)| a * c).sum();
                    Ok((v, NumArray::vector(n.backward(&tr, &coef)?)))
                },
                &p0,
                1e-5,
            )
            .unwrap();
            assert!(report.max_rel_error < 1e-6, "{kind:?}: {}", report.max_rel_error);
        }
    }
}
