//! The two baseline policy architectures as pure forward functions with
//! analytic gradients: a fixed-size MLP over the padded host matrix, and
//! a size-invariant set model. Both output one joint categorical
//! distribution over (host, primitive) pairs plus a state value.
//!
//! All math is f64. The invariant model sums aggregation addends in a
//! canonical order (sorted by total_cmp), so permuting its input hosts
//! permutes the output probability blocks bit-exactly and leaves the
//! value unchanged bit-exactly.

use ndarray::linalg::{general_mat_mul, general_mat_vec_mul};
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::Action;
use crate::observation::{encode_invariant_input, encode_matrix, MatrixObs, Observation};
use crate::scenario::FeatureSchema;
use crate::seeding::rng_for;

/// Host rows the MLP is padded to.
pub const MLP_MAX_HOSTS: usize = 30;
/// Positional-embedding width appended for the invariant model.
pub const PE_DIM: usize = 8;
/// Default hidden width of the MLP.
pub const MLP_HIDDEN: usize = 64;
/// Default embedding width of the invariant model.
pub const INVARIANT_EMBED: usize = 64;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("observation error: {0}")]
    Obs(#[from] crate::observation::ObsError),
    #[error("empty host set: the models need at least one discovered host")]
    EmptyHostSet,
    #[error("degenerate distribution: no probability mass to sample")]
    Degenerate,
    #[error("flat action index {index} out of range for {hosts} hosts x {primitives} primitives")]
    IndexOutOfRange { index: usize, hosts: usize, primitives: usize },
    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),
}

/// Masked categorical over (host, primitive) pairs plus the state value.
/// `probs` has length valid_hosts x action_dim and sums to 1; anything
/// masked upstream carries exactly zero mass.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub probs: Vec<f64>,
    pub value: f64,
}

/// Order of per-host primitive slots: exploits (schema order), privescs
/// (schema order), then ServiceScan, OsScan, SubnetScan, ProcessScan,
/// Terminal.
pub fn decode_action(
    flat: usize,
    obs: &Observation,
    schema: &FeatureSchema,
) -> Result<Action, PolicyError> {
    let a = schema.action_dim();
    let hosts = obs.hosts.len();
    if flat >= hosts * a {
        return Err(PolicyError::IndexOutOfRange { index: flat, hosts, primitives: a });
    }
    let target = obs.hosts[flat / a].address;
    let prim = flat % a;
    let ne = schema.exploit_ids.len();
    let np = schema.privesc_ids.len();
    Ok(if prim < ne {
        Action::Exploit { id: schema.exploit_ids[prim].clone(), target }
    } else if prim < ne + np {
        Action::PrivEsc { id: schema.privesc_ids[prim - ne].clone(), target }
    } else {
        match prim - ne - np {
            0 => Action::ServiceScan { target },
            1 => Action::OsScan { target },
            2 => Action::SubnetScan { target },
            3 => Action::ProcessScan { target },
            _ => Action::Terminal,
        }
    })
}

/// Sample a flat action index from the distribution.
pub fn sample_action(output: &PolicyOutput, rng: &mut impl Rng) -> Result<usize, PolicyError> {
    let total: f64 = output.probs.iter().sum();
    if output.probs.is_empty() || total <= 0.0 {
        return Err(PolicyError::Degenerate);
    }
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, p) in output.probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(output.probs.len() - 1)
}

/// Argmax action with lowest-index tie-break.
pub fn greedy_action(output: &PolicyOutput) -> Result<usize, PolicyError> {
    if output.probs.is_empty() {
        return Err(PolicyError::Degenerate);
    }
    let mut best = 0;
    for (i, p) in output.probs.iter().enumerate().skip(1) {
        if *p > output.probs[best] {
            best = i;
        }
    }
    Ok(best)
}

fn leaky(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        0.01 * x
    }
}

fn leaky_grad(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        0.01
    }
}

/// Softmax with an explicit validity mask; masked entries get exactly 0.
/// The max and the normalizer are both computed in a canonical order so
/// the result is independent of how the entries were arranged.
fn masked_softmax(logits: &[f64], valid: impl Fn(usize) -> bool) -> Vec<f64> {
    let mut m = f64::NEG_INFINITY;
    for (i, &l) in logits.iter().enumerate() {
        if valid(i) && l.total_cmp(&m).is_gt() {
            m = l;
        }
    }
    let mut out = vec![0.0; logits.len()];
    let mut exps = Vec::new();
    for (i, &l) in logits.iter().enumerate() {
        if valid(i) {
            let e = (l - m).exp();
            out[i] = e;
            exps.push(e);
        }
    }
    let z = canonical_sum(&mut exps);
    for x in &mut out {
        *x /= z;
    }
    out
}

/// Sum in a canonical order independent of input permutation.
fn canonical_sum(values: &mut Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    values.iter().sum()
}

/// Identifies the feature layout and widths a parameter set was built
/// for; checkpoints refuse to load across fingerprint changes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub model: String,
    pub d: usize,
    pub a: usize,
    pub s_max: usize,
    pub h_max: usize,
    pub hidden: usize,
    pub pe_dim: usize,
    pub max_hosts: usize,
}

/// Common interface the trainer drives. Gradients accumulate into a
/// zero-initialized clone of the parameter struct, so Adam can treat
/// parameters and gradients as matching flat vectors.
pub trait PolicyModel: Clone + Send {
    type Cache;

    fn model_name(&self) -> &'static str;
    fn forward_obs(
        &self,
        obs: &Observation,
        schema: &FeatureSchema,
    ) -> Result<(PolicyOutput, Self::Cache), PolicyError>;
    /// `dlogits` has the PolicyOutput length (valid hosts x A);
    /// `dvalue` is dLoss/dValue.
    fn backward_obs(&self, cache: &Self::Cache, dlogits: &[f64], dvalue: f64, grads: &mut Self);
    fn zeros_like(&self) -> Self;
    fn flat(&self) -> Vec<f64>;
    fn set_flat(&mut self, flat: &[f64]);
    fn param_count(&self) -> usize;
    fn fingerprint(&self, schema: &FeatureSchema) -> Fingerprint;
}

/// Fixed-capacity baseline: the padded 30-host matrix is flattened into
/// one input vector for a single LeakyReLU layer with linear policy and
/// value heads.
#[derive(Debug, Clone)]
pub struct MlpPolicy {
    pub d: usize,
    pub a: usize,
    pub hidden: usize,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub wv: Array1<f64>,
    pub bv: f64,
    pub wp: Array2<f64>,
    pub bp: Array1<f64>,
}

pub struct MlpCache {
    /// The valid host rows only; padded rows are zero and contribute
    /// nothing to either pass.
    rows: Array2<f64>,
    z1: Array1<f64>,
    a1: Array1<f64>,
    probs_full: Vec<f64>,
    n_valid: usize,
}

impl MlpPolicy {
    pub fn new(schema: &FeatureSchema, hidden: usize, seed: u64) -> Self {
        let d = schema.host_vector_dim();
        let a = schema.action_dim();
        let mut rng = rng_for(seed, 0);
        let input = MLP_MAX_HOSTS * d;
        let out = MLP_MAX_HOSTS * a;
        let mut draw = |fan_in: usize, n: usize| -> Vec<f64> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
        };
        MlpPolicy {
            d,
            a,
            hidden,
            w1: Array2::from_shape_vec((input, hidden), draw(input, input * hidden)).unwrap(),
            b1: Array1::from_vec(draw(input, hidden)),
            wv: Array1::from_vec(draw(hidden, hidden)),
            bv: draw(hidden, 1)[0],
            wp: Array2::from_shape_vec((hidden, out), draw(hidden, hidden * out)).unwrap(),
            bp: Array1::from_vec(draw(hidden, out)),
        }
    }

    /// Forward over an encoded matrix; also returns the full-width
    /// probability vector in which masked rows are exactly zero.
    ///
    /// Equivalent to the dense flattened-input formulation, since the
    /// padded rows are zero and the masked logits would be driven to
    /// -inf anyway; only the valid blocks are touched.
    pub fn forward(&self, m: &MatrixObs) -> Result<(PolicyOutput, MlpCache), PolicyError> {
        if m.n_valid == 0 {
            return Err(PolicyError::EmptyHostSet);
        }
        debug_assert_eq!(m.data.nrows(), MLP_MAX_HOSTS);
        debug_assert_eq!(m.data.ncols(), self.d);
        let n_valid = m.n_valid;
        let d = self.d;
        let a = self.a;

        let rows = m.data.slice(s![..n_valid, ..]).to_owned();
        let mut z1 = self.b1.clone();
        for i in 0..n_valid {
            let block = self.w1.slice(s![i * d..(i + 1) * d, ..]);
            general_mat_vec_mul(1.0, &block.t(), &rows.row(i), 1.0, &mut z1);
        }
        let a1 = z1.mapv(leaky);
        let value = a1.dot(&self.wv) + self.bv;

        let out_valid = n_valid * a;
        let mut logits = self.bp.slice(s![..out_valid]).to_owned();
        general_mat_vec_mul(
            1.0,
            &self.wp.slice(s![.., ..out_valid]).t(),
            &a1,
            1.0,
            &mut logits,
        );
        let probs = masked_softmax(logits.as_slice().unwrap(), |_| true);
        let mut probs_full = vec![0.0; MLP_MAX_HOSTS * a];
        probs_full[..out_valid].copy_from_slice(&probs);
        Ok((
            PolicyOutput { probs, value },
            MlpCache { rows, z1, a1, probs_full, n_valid },
        ))
    }

    /// Probability over all 30 x A slots; masked entries are exactly 0.
    pub fn forward_full(&self, m: &MatrixObs) -> Result<(Vec<f64>, f64), PolicyError> {
        let (out, cache) = self.forward(m)?;
        Ok((cache.probs_full, out.value))
    }
}

impl PolicyModel for MlpPolicy {
    type Cache = MlpCache;

    fn model_name(&self) -> &'static str {
        "mlp"
    }

    fn forward_obs(
        &self,
        obs: &Observation,
        schema: &FeatureSchema,
    ) -> Result<(PolicyOutput, MlpCache), PolicyError> {
        let m = encode_matrix(obs, schema, MLP_MAX_HOSTS)?;
        self.forward(&m)
    }

    fn backward_obs(&self, cache: &MlpCache, dlogits: &[f64], dvalue: f64, grads: &mut Self) {
        let out = cache.n_valid * self.a;
        debug_assert_eq!(dlogits.len(), out);
        let d = self.d;
        let dl = ndarray::ArrayView1::from(dlogits);

        // policy head; gradients of masked logits are exactly zero, so
        // only the valid column block is ever written
        let mut bp_valid = grads.bp.slice_mut(s![..out]);
        bp_valid += &dl;
        general_mat_mul(
            1.0,
            &cache.a1.view().insert_axis(Axis(1)),
            &dl.insert_axis(Axis(0)),
            1.0,
            &mut grads.wp.slice_mut(s![.., ..out]),
        );
        let mut da1 = self.wv.mapv(|w| w * dvalue);
        general_mat_vec_mul(1.0, &self.wp.slice(s![.., ..out]), &dl, 1.0, &mut da1);

        // value head
        grads.wv.scaled_add(dvalue, &cache.a1);
        grads.bv += dvalue;

        // hidden layer; padded input rows are zero, so their weight
        // blocks receive no gradient
        let dz1 = Array1::from_iter(
            da1.iter().zip(cache.z1.iter()).map(|(&g, &z)| g * leaky_grad(z)),
        );
        grads.b1 += &dz1;
        let dz1_row = dz1.view().insert_axis(Axis(0));
        for i in 0..cache.n_valid {
            general_mat_mul(
                1.0,
                &cache.rows.row(i).insert_axis(Axis(1)),
                &dz1_row,
                1.0,
                &mut grads.w1.slice_mut(s![i * d..(i + 1) * d, ..]),
            );
        }
    }

    fn zeros_like(&self) -> Self {
        MlpPolicy {
            d: self.d,
            a: self.a,
            hidden: self.hidden,
            w1: Array2::zeros(self.w1.dim()),
            b1: Array1::zeros(self.b1.len()),
            wv: Array1::zeros(self.wv.len()),
            bv: 0.0,
            wp: Array2::zeros(self.wp.dim()),
            bp: Array1::zeros(self.bp.len()),
        }
    }

    fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend(self.w1.iter());
        out.extend(self.b1.iter());
        out.extend(self.wv.iter());
        out.push(self.bv);
        out.extend(self.wp.iter());
        out.extend(self.bp.iter());
        out
    }

    fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut it = flat.iter().copied();
        for x in self.w1.iter_mut() {
            *x = it.next().unwrap();
        }
        for x in self.b1.iter_mut() {
            *x = it.next().unwrap();
        }
        for x in self.wv.iter_mut() {
            *x = it.next().unwrap();
        }
        self.bv = it.next().unwrap();
        for x in self.wp.iter_mut() {
            *x = it.next().unwrap();
        }
        for x in self.bp.iter_mut() {
            *x = it.next().unwrap();
        }
    }

    fn param_count(&self) -> usize {
        let input = MLP_MAX_HOSTS * self.d;
        let out = MLP_MAX_HOSTS * self.a;
        input * self.hidden + self.hidden + (self.hidden + 1) + (self.hidden + 1) * out
    }

    fn fingerprint(&self, schema: &FeatureSchema) -> Fingerprint {
        Fingerprint {
            model: "mlp".into(),
            d: self.d,
            a: self.a,
            s_max: schema.s_max,
            h_max: schema.h_max,
            hidden: self.hidden,
            pe_dim: 0,
            max_hosts: MLP_MAX_HOSTS,
        }
    }
}

/// Size-invariant set model: a shared affine + LeakyReLU embedding per
/// host, concatenated element-wise mean and max aggregation, a per-host
/// action head over [embedding, aggregation], and a value head over the
/// aggregation alone. Handles any number of hosts.
#[derive(Debug, Clone)]
pub struct InvariantPolicy {
    pub d_in: usize,
    pub a: usize,
    pub k: usize,
    pub we: Array2<f64>,
    pub be: Array1<f64>,
    pub wa: Array2<f64>,
    pub ba: Array1<f64>,
    pub wv: Array1<f64>,
    pub bv: f64,
}

pub struct InvariantCache {
    x: Array2<f64>,
    z: Array2<f64>,
    e: Array2<f64>,
    max_idx: Vec<usize>,
    agg: Array1<f64>,
}

impl InvariantPolicy {
    pub fn new(schema: &FeatureSchema, k: usize, seed: u64) -> Self {
        let d_in = schema.host_vector_dim() + PE_DIM;
        let a = schema.action_dim();
        let mut rng = rng_for(seed, 0);
        let mut draw = |fan_in: usize, n: usize| -> Vec<f64> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
        };
        InvariantPolicy {
            d_in,
            a,
            k,
            we: Array2::from_shape_vec((d_in, k), draw(d_in, d_in * k)).unwrap(),
            be: Array1::from_vec(draw(d_in, k)),
            wa: Array2::from_shape_vec((3 * k, a), draw(3 * k, 3 * k * a)).unwrap(),
            ba: Array1::from_vec(draw(3 * k, a)),
            wv: Array1::from_vec(draw(2 * k, 2 * k)),
            bv: draw(2 * k, 1)[0],
        }
    }

    /// Forward over pre-encoded host rows (feature vector + positional
    /// embedding per row). Any row count >= 1 is accepted.
    pub fn forward(&self, x: &Array2<f64>) -> Result<(PolicyOutput, InvariantCache), PolicyError> {
        let n = x.nrows();
        if n == 0 {
            return Err(PolicyError::EmptyHostSet);
        }
        debug_assert_eq!(x.ncols(), self.d_in);
        let z = x.dot(&self.we) + &self.be;
        let e = z.mapv(leaky);

        let k = self.k;
        let mut mean = Array1::zeros(k);
        let mut maxv = Array1::zeros(k);
        let mut max_idx = vec![0usize; k];
        let mut column = Vec::with_capacity(n);
        for j in 0..k {
            column.clear();
            column.extend(e.column(j).iter().copied());
            let mut best = 0;
            for (i, v) in column.iter().enumerate() {
                if v.total_cmp(&column[best]).is_gt() {
                    best = i;
                }
            }
            max_idx[j] = best;
            maxv[j] = column[best];
            mean[j] = canonical_sum(&mut column) / n as f64;
        }
        let mut agg = Array1::zeros(2 * k);
        agg.slice_mut(s![..k]).assign(&mean);
        agg.slice_mut(s![k..]).assign(&maxv);

        let value = agg.dot(&self.wv) + self.bv;

        let mut joint = Array2::zeros((n, 3 * k));
        joint.slice_mut(s![.., ..k]).assign(&e);
        joint
            .slice_mut(s![.., k..])
            .assign(&agg.broadcast((n, 2 * k)).expect("agg broadcasts over hosts"));
        let logits = joint.dot(&self.wa) + &self.ba;
        let probs =
            masked_softmax(logits.as_slice().expect("row-major logits"), |_| true);
        Ok((
            PolicyOutput { probs, value },
            InvariantCache { x: x.clone(), z, e, max_idx, agg },
        ))
    }
}

impl PolicyModel for InvariantPolicy {
    type Cache = InvariantCache;

    fn model_name(&self) -> &'static str {
        "invariant"
    }

    fn forward_obs(
        &self,
        obs: &Observation,
        schema: &FeatureSchema,
    ) -> Result<(PolicyOutput, InvariantCache), PolicyError> {
        let x = encode_invariant_input(obs, schema, PE_DIM)?;
        self.forward(&x)
    }

    fn backward_obs(&self, cache: &InvariantCache, dlogits: &[f64], dvalue: f64, grads: &mut Self) {
        let n = cache.x.nrows();
        let k = self.k;
        let a = self.a;
        debug_assert_eq!(dlogits.len(), n * a);
        let dl = ArrayView2::from_shape((n, a), dlogits).expect("contiguous dlogits");
        let dl_sum = dl.sum_axis(Axis(0));

        // action head: logits_i = [e_i ++ agg] . wa + ba; the shared
        // agg block collects the summed per-host gradient
        grads.ba += &dl_sum;
        general_mat_mul(1.0, &cache.e.t(), &dl, 1.0, &mut grads.wa.slice_mut(s![..k, ..]));
        general_mat_mul(
            1.0,
            &cache.agg.view().insert_axis(Axis(1)),
            &dl_sum.view().insert_axis(Axis(0)),
            1.0,
            &mut grads.wa.slice_mut(s![k.., ..]),
        );
        let mut de = dl.dot(&self.wa.slice(s![..k, ..]).t());
        let mut dagg = self.wa.slice(s![k.., ..]).dot(&dl_sum);

        // value head: value = agg . wv + bv
        grads.wv.scaled_add(dvalue, &cache.agg);
        grads.bv += dvalue;
        dagg.scaled_add(dvalue, &self.wv);

        // aggregation: mean spreads evenly, max routes to its argmax
        let inv_n = 1.0 / n as f64;
        for c in 0..k {
            let dm = dagg[c] * inv_n;
            de.column_mut(c).map_inplace(|v| *v += dm);
            de[(cache.max_idx[c], c)] += dagg[k + c];
        }

        // shared embedding
        let dz = Array2::from_shape_fn((n, k), |(i, c)| de[(i, c)] * leaky_grad(cache.z[(i, c)]));
        general_mat_mul(1.0, &cache.x.t(), &dz, 1.0, &mut grads.we);
        grads.be += &dz.sum_axis(Axis(0));
    }

    fn zeros_like(&self) -> Self {
        InvariantPolicy {
            d_in: self.d_in,
            a: self.a,
            k: self.k,
            we: Array2::zeros(self.we.dim()),
            be: Array1::zeros(self.be.len()),
            wa: Array2::zeros(self.wa.dim()),
            ba: Array1::zeros(self.ba.len()),
            wv: Array1::zeros(self.wv.len()),
            bv: 0.0,
        }
    }

    fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend(self.we.iter());
        out.extend(self.be.iter());
        out.extend(self.wa.iter());
        out.extend(self.ba.iter());
        out.extend(self.wv.iter());
        out.push(self.bv);
        out
    }

    fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut it = flat.iter().copied();
        for x in self.we.iter_mut() {
            *x = it.next().unwrap();
        }
        for x in self.be.iter_mut() {
            *x = it.next().unwrap();
        }
        for x in self.wa.iter_mut() {
            *x = it.next().unwrap();
        }
        for x in self.ba.iter_mut() {
            *x = it.next().unwrap();
        }
        for x in self.wv.iter_mut() {
            *x = it.next().unwrap();
        }
        self.bv = it.next().unwrap();
    }

    fn param_count(&self) -> usize {
        self.d_in * self.k + self.k + (3 * self.k + 1) * self.a + (2 * self.k + 1)
    }

    fn fingerprint(&self, schema: &FeatureSchema) -> Fingerprint {
        Fingerprint {
            model: "invariant".into(),
            d: schema.host_vector_dim(),
            a: self.a,
            s_max: schema.s_max,
            h_max: schema.h_max,
            hidden: self.k,
            pe_dim: PE_DIM,
            max_hosts: 0,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    fingerprint: Fingerprint,
    params: Vec<f64>,
}

/// Serialize parameters with their schema fingerprint.
pub fn save_checkpoint<M: PolicyModel>(model: &M, schema: &FeatureSchema) -> String {
    let file = CheckpointFile {
        version: 1,
        fingerprint: model.fingerprint(schema),
        params: model.flat(),
    };
    serde_json::to_string(&file).expect("checkpoint serialization cannot fail")
}

/// Load parameters into a freshly constructed model of the same shape.
/// A fingerprint mismatch is rejected with both fingerprints shown.
pub fn load_checkpoint<M: PolicyModel>(
    model: &mut M,
    schema: &FeatureSchema,
    text: &str,
) -> Result<(), PolicyError> {
    let file: CheckpointFile =
        serde_json::from_str(text).map_err(|e| PolicyError::Checkpoint(e.to_string()))?;
    if file.version != 1 {
        return Err(PolicyError::Checkpoint(format!("unsupported version {}", file.version)));
    }
    let expected = model.fingerprint(schema);
    if file.fingerprint != expected {
        return Err(PolicyError::Checkpoint(format!(
            "fingerprint mismatch: file has {:?}, schema needs {:?}",
            file.fingerprint, expected
        )));
    }
    if file.params.len() != model.param_count() {
        return Err(PolicyError::Checkpoint(format!(
            "parameter count mismatch: file has {}, model needs {}",
            file.params.len(),
            model.param_count()
        )));
    }
    model.set_flat(&file.params);
    Ok(())
}

/// Read just the model name from a checkpoint, for CLI dispatch.
pub fn checkpoint_model_name(text: &str) -> Result<String, PolicyError> {
    let file: CheckpointFile =
        serde_json::from_str(text).map_err(|e| PolicyError::Checkpoint(e.to_string()))?;
    Ok(file.fingerprint.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::EngineState;
    use crate::fixtures::t1;
    use crate::observation::encode_invariant_input;
    use crate::scenario::{bundled_scenarios, unify_feature_schema};

    fn schema() -> FeatureSchema {
        let specs: Vec<_> = bundled_scenarios().into_values().collect();
        unify_feature_schema(&specs)
    }

    #[test]
    fn parameter_count_formulas_hold() {
        let schema = schema();
        let d = schema.host_vector_dim();
        let a = schema.action_dim();
        let mlp = MlpPolicy::new(&schema, MLP_HIDDEN, 0);
        assert_eq!(
            mlp.param_count(),
            30 * d * 64 + 64 + 65 + 65 * (30 * a)
        );
        assert_eq!(mlp.flat().len(), mlp.param_count());
        let inv = InvariantPolicy::new(&schema, INVARIANT_EMBED, 0);
        assert_eq!(
            inv.param_count(),
            (d + PE_DIM) * 64 + 64 + (3 * 64 + 1) * a + (2 * 64 + 1)
        );
        assert_eq!(inv.flat().len(), inv.param_count());
        assert!(
            mlp.param_count() > 10 * inv.param_count(),
            "the fixed model should dwarf the invariant one: {} vs {}",
            mlp.param_count(),
            inv.param_count()
        );
    }

    #[test]
    fn zero_params_give_uniform_distribution_and_zero_value() {
        let schema = schema();
        let (_, obs) = EngineState::reset(t1());
        let a = schema.action_dim();

        let mlp = MlpPolicy::new(&schema, MLP_HIDDEN, 0).zeros_like();
        let (out, _) = mlp.forward_obs(&obs, &schema).unwrap();
        assert_eq!(out.probs.len(), a);
        for &p in &out.probs {
            assert!((p - 1.0 / a as f64).abs() < 1e-15);
        }
        assert_eq!(out.value, 0.0);

        let inv = InvariantPolicy::new(&schema, INVARIANT_EMBED, 0).zeros_like();
        let (out, _) = inv.forward_obs(&obs, &schema).unwrap();
        assert_eq!(out.probs.len(), a);
        for &p in &out.probs {
            assert!((p - 1.0 / a as f64).abs() < 1e-15);
        }
        assert_eq!(out.value, 0.0);
    }

    #[test]
    fn masked_rows_carry_exactly_zero_mass() {
        let schema = schema();
        let (_, obs) = EngineState::reset(t1());
        for seed in 0..50 {
            let mlp = MlpPolicy::new(&schema, 16, seed);
            let m = encode_matrix(&obs, &schema, MLP_MAX_HOSTS).unwrap();
            let (full, _) = mlp.forward_full(&m).unwrap();
            let a = schema.action_dim();
            for (i, &p) in full.iter().enumerate() {
                if i / a >= m.n_valid {
                    assert_eq!(p, 0.0, "masked slot {i} leaked mass");
                }
            }
            let valid_sum: f64 = full[..m.n_valid * a].iter().sum();
            assert!((valid_sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mlp_rejects_more_than_capacity_hosts() {
        let schema = schema();
        let mut obs = {
            let (_, obs) = EngineState::reset(t1());
            obs
        };
        let template = obs.hosts[0].clone();
        obs.hosts = (0..31)
            .map(|i| {
                let mut h = template.clone();
                h.address = (1 + i / 10, i % 10);
                h.discovery_order = i;
                h
            })
            .collect();
        let mlp = MlpPolicy::new(&schema, 16, 0);
        assert!(mlp.forward_obs(&obs, &schema).is_err());
        // The invariant model takes the same 31 hosts in stride.
        let inv = InvariantPolicy::new(&schema, 16, 0);
        let (out, _) = inv.forward_obs(&obs, &schema).unwrap();
        assert_eq!(out.probs.len(), 31 * schema.action_dim());
    }

    #[test]
    fn invariant_accepts_sixty_hosts() {
        let schema = schema();
        let inv = InvariantPolicy::new(&schema, 16, 1);
        let x = Array2::from_shape_fn((60, inv.d_in), |(i, j)| {
            ((i * 31 + j * 7) % 13) as f64 / 13.0
        });
        let (out, _) = inv.forward(&x).unwrap();
        assert_eq!(out.probs.len(), 60 * schema.action_dim());
        let sum: f64 = out.probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn permuting_hosts_permutes_blocks_bit_exactly() {
        use rand::seq::SliceRandom;
        let schema = schema();
        let a = schema.action_dim();
        let mut rng = rng_for(99, 0);
        for trial in 0..100 {
            let inv = InvariantPolicy::new(&schema, 24, trial);
            let n = 2 + (trial as usize % 7);
            let x = Array2::from_shape_fn((n, inv.d_in), |_| rng.gen_range(-1.0..1.0));
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let xp = Array2::from_shape_fn((n, inv.d_in), |(i, j)| x[(perm[i], j)]);
            let (base, _) = inv.forward(&x).unwrap();
            let (permuted, _) = inv.forward(&xp).unwrap();
            assert_eq!(base.value.to_bits(), permuted.value.to_bits(), "trial {trial}");
            for i in 0..n {
                let expect = &base.probs[perm[i] * a..(perm[i] + 1) * a];
                let got = &permuted.probs[i * a..(i + 1) * a];
                assert_eq!(expect, got, "trial {trial} block {i}");
            }
        }
    }

    #[test]
    fn sampling_frequencies_match_probabilities() {
        let probs = vec![0.5, 0.25, 0.125, 0.125];
        let out = PolicyOutput { probs: probs.clone(), value: 0.0 };
        let mut rng = rng_for(3, 0);
        let mut counts = [0usize; 4];
        let n = 10_000;
        for _ in 0..n {
            counts[sample_action(&out, &mut rng).unwrap()] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            let f = c as f64 / n as f64;
            assert!((f - probs[i]).abs() < 0.02, "slot {i}: {f} vs {}", probs[i]);
        }
    }

    #[test]
    fn one_hot_distribution_is_certain() {
        let out = PolicyOutput { probs: vec![0.0, 1.0, 0.0], value: 0.0 };
        let mut rng = rng_for(0, 0);
        for _ in 0..100 {
            assert_eq!(sample_action(&out, &mut rng).unwrap(), 1);
        }
        assert_eq!(greedy_action(&out).unwrap(), 1);
    }

    #[test]
    fn greedy_breaks_ties_toward_the_lowest_index() {
        let out = PolicyOutput { probs: vec![0.2, 0.3, 0.3, 0.2], value: 0.0 };
        assert_eq!(greedy_action(&out).unwrap(), 1);
    }

    #[test]
    fn degenerate_distributions_are_rejected() {
        let mut rng = rng_for(0, 0);
        let empty = PolicyOutput { probs: vec![], value: 0.0 };
        assert!(sample_action(&empty, &mut rng).is_err());
        let zero = PolicyOutput { probs: vec![0.0, 0.0], value: 0.0 };
        assert!(sample_action(&zero, &mut rng).is_err());
    }

    #[test]
    fn decode_maps_flat_indices_to_hosts_and_primitives() {
        let schema = schema();
        let (mut state, _) = EngineState::reset(t1());
        state
            .step(&Action::Exploit { id: "e_wp_ninja".into(), target: (1, 0) })
            .unwrap();
        let obs = state
            .step(&Action::SubnetScan { target: (1, 0) })
            .unwrap()
            .observation;
        assert_eq!(obs.hosts.len(), 2);
        let a = schema.action_dim();

        // index A + 2 lands on the second discovered host, primitive 2
        let action = decode_action(a + 2, &obs, &schema).unwrap();
        assert_eq!(action.target(), Some(obs.hosts[1].address));
        assert_eq!(action.id(), Some(schema.exploit_ids[2].as_str()));

        let ne = schema.exploit_ids.len();
        let np = schema.privesc_ids.len();
        assert!(matches!(
            decode_action(ne, &obs, &schema).unwrap(),
            Action::PrivEsc { .. }
        ));
        assert!(matches!(
            decode_action(ne + np, &obs, &schema).unwrap(),
            Action::ServiceScan { .. }
        ));
        assert!(matches!(
            decode_action(a - 1, &obs, &schema).unwrap(),
            Action::Terminal
        ));
        assert!(decode_action(2 * a, &obs, &schema).is_err());
    }

    #[test]
    fn forward_is_deterministic() {
        let schema = schema();
        let (_, obs) = EngineState::reset(t1());
        let mlp = MlpPolicy::new(&schema, MLP_HIDDEN, 7);
        let (a1, _) = mlp.forward_obs(&obs, &schema).unwrap();
        let (a2, _) = mlp.forward_obs(&obs, &schema).unwrap();
        assert_eq!(a1, a2);
        let inv = InvariantPolicy::new(&schema, INVARIANT_EMBED, 7);
        let (b1, _) = inv.forward_obs(&obs, &schema).unwrap();
        let (b2, _) = inv.forward_obs(&obs, &schema).unwrap();
        assert_eq!(b1, b2);
    }

    #[test]
    fn flat_round_trip_preserves_parameters() {
        let schema = schema();
        let mlp = MlpPolicy::new(&schema, 8, 13);
        let mut other = mlp.zeros_like();
        other.set_flat(&mlp.flat());
        assert_eq!(other.flat(), mlp.flat());
        let inv = InvariantPolicy::new(&schema, 8, 13);
        let mut other = inv.zeros_like();
        other.set_flat(&inv.flat());
        assert_eq!(other.flat(), inv.flat());
    }

    #[test]
    fn checkpoints_round_trip_and_reject_mismatches() {
        let schema = schema();
        let inv = InvariantPolicy::new(&schema, INVARIANT_EMBED, 5);
        let text = save_checkpoint(&inv, &schema);
        let mut loaded = InvariantPolicy::new(&schema, INVARIANT_EMBED, 999);
        load_checkpoint(&mut loaded, &schema, &text).unwrap();
        assert_eq!(loaded.flat(), inv.flat());
        assert_eq!(checkpoint_model_name(&text).unwrap(), "invariant");

        // wrong width
        let mut narrow = InvariantPolicy::new(&schema, 16, 0);
        let err = load_checkpoint(&mut narrow, &schema, &text).unwrap_err();
        assert!(err.to_string().contains("fingerprint mismatch"));

        // wrong model family
        let mut mlp = MlpPolicy::new(&schema, MLP_HIDDEN, 0);
        assert!(load_checkpoint(&mut mlp, &schema, &text).is_err());
    }

    #[test]
    fn invariant_matches_manual_small_case() {
        // One host, k=1: value and probabilities computable by hand.
        let schema = schema();
        let mut inv = InvariantPolicy::new(&schema, 1, 0).zeros_like();
        inv.d_in = 2;
        inv.we = Array2::from_shape_vec((2, 1), vec![1.0, -1.0]).unwrap();
        inv.be = Array1::from_vec(vec![0.5]);
        inv.a = 2;
        inv.wa = Array2::from_shape_vec((3, 2), vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        inv.ba = Array1::from_vec(vec![0.0, 0.0]);
        inv.wv = Array1::from_vec(vec![2.0, 3.0]);
        inv.bv = 0.25;
        let x = Array2::from_shape_vec((1, 2), vec![2.0, 1.0]).unwrap();
        // z = 2 - 1 + 0.5 = 1.5; e = 1.5; mean = max = 1.5
        // value = 2*1.5 + 3*1.5 + 0.25 = 7.75
        // logits = [e*1 + mean*0 + max*1, e*0 + mean*1 + max*1] = [3.0, 3.0]
        let (out, _) = inv.forward(&x).unwrap();
        assert!((out.value - 7.75).abs() < 1e-12);
        assert!((out.probs[0] - 0.5).abs() < 1e-12);
        assert!((out.probs[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn encode_then_invariant_forward_accepts_t1_observation() {
        let schema = schema();
        let (_, obs) = EngineState::reset(t1());
        let x = encode_invariant_input(&obs, &schema, PE_DIM).unwrap();
        assert_eq!(x.nrows(), 1);
        let inv = InvariantPolicy::new(&schema, INVARIANT_EMBED, 2);
        let (out, _) = inv.forward(&x).unwrap();
        assert_eq!(out.probs.len(), schema.action_dim());
    }
}
