//! Standard LSTM cell and bidirectional sequence encoder built on the tape.
//!
//! Weight layout per direction: `w_ih [4H, I]`, `w_hh [4H, H]`, `b [4H]`,
//! gate order (input, forget, cell, output).

use rand::Rng;

use crate::error::Result;

use super::optim::ParameterSet;
use super::tensor::{BoundParams, Tape, Var};

/// Bound weight vars for one LSTM direction.
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights {
    pub w_ih: Var,
    pub w_hh: Var,
    pub b: Var,
    pub hidden: usize,
}

impl LstmWeights {
    /// Registers freshly initialized weights under `{prefix}.{w_ih,w_hh,b}`.
    pub fn register<R: Rng>(
        params: &mut ParameterSet,
        prefix: &str,
        input: usize,
        hidden: usize,
        bound: f64,
        rng: &mut R,
    ) -> Result<()> {
        params.add_uniform(&format!("{prefix}.w_ih"), &[4 * hidden, input], bound, rng)?;
        params.add_uniform(&format!("{prefix}.w_hh"), &[4 * hidden, hidden], bound, rng)?;
        params.add_zeros(&format!("{prefix}.b"), &[4 * hidden])
    }

    pub fn bind(bound: &BoundParams, prefix: &str, hidden: usize) -> Result<Self> {
        Ok(LstmWeights {
            w_ih: bound.var(&format!("{prefix}.w_ih"))?,
            w_hh: bound.var(&format!("{prefix}.w_hh"))?,
            b: bound.var(&format!("{prefix}.b"))?,
            hidden,
        })
    }
}

/// One gated update: returns `(h', c')`.
pub fn lstm_cell(
    tape: &mut Tape,
    w: &LstmWeights,
    x: Var,
    h: Var,
    c: Var,
) -> Result<(Var, Var)> {
    let hx = tape.matmul(w.w_ih, x)?;
    let hh = tape.matmul(w.w_hh, h)?;
    let pre = tape.add(hx, hh)?;
    let gates = tape.add(pre, w.b)?;
    let hdim = w.hidden;
    let i_pre = tape.slice(gates, 0, hdim)?;
    let f_pre = tape.slice(gates, hdim, hdim)?;
    let g_pre = tape.slice(gates, 2 * hdim, hdim)?;
    let o_pre = tape.slice(gates, 3 * hdim, hdim)?;
    let i = tape.sigmoid(i_pre)?;
    let f = tape.sigmoid(f_pre)?;
    let g = tape.tanh(g_pre)?;
    let o = tape.sigmoid(o_pre)?;
    let fc = tape.mul(f, c)?;
    let ig = tape.mul(i, g)?;
    let c_new = tape.add(fc, ig)?;
    let c_act = tape.tanh(c_new)?;
    let h_new = tape.mul(o, c_act)?;
    Ok((h_new, c_new))
}

/// Runs one direction over the sequence, returning the state at every step.
pub fn lstm_scan(tape: &mut Tape, w: &LstmWeights, xs: &[Var]) -> Result<Vec<Var>> {
    let zero = tape.constant(super::tensor::Tensor::zeros(&[w.hidden]));
    let (mut h, mut c) = (zero, zero);
    let mut states = Vec::with_capacity(xs.len());
    for &x in xs {
        let (h2, c2) = lstm_cell(tape, w, x, h, c)?;
        h = h2;
        c = c2;
        states.push(h);
    }
    Ok(states)
}

/// Bidirectional pass. `forward[i]` is the left-to-right state at position
/// `i`; `backward[i]` the right-to-left state at the same position.
pub fn bilstm(
    tape: &mut Tape,
    fw: &LstmWeights,
    bw: &LstmWeights,
    xs: &[Var],
) -> Result<(Vec<Var>, Vec<Var>)> {
    if xs.is_empty() {
        return Err(crate::error::Error::InvalidArgument(
            "bilstm over an empty sequence".to_string(),
        ));
    }
    let forward = lstm_scan(tape, fw, xs)?;
    let rev: Vec<Var> = xs.iter().rev().copied().collect();
    let mut backward = lstm_scan(tape, bw, &rev)?;
    backward.reverse();
    Ok((forward, backward))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;
    use crate::rng::stream;
    use rand::Rng;

    fn weights(tape: &mut Tape, params: &ParameterSet) -> (LstmWeights, LstmWeights) {
        let bound = tape.bind(params);
        (
            LstmWeights::bind(&bound, "fw", 3).unwrap(),
            LstmWeights::bind(&bound, "bw", 3).unwrap(),
        )
    }

    fn random_params(seed: u64) -> ParameterSet {
        let mut rng = stream(seed, "lstm-test");
        let mut params = ParameterSet::new();
        LstmWeights::register(&mut params, "fw", 2, 3, 0.5, &mut rng).unwrap();
        LstmWeights::register(&mut params, "bw", 2, 3, 0.5, &mut rng).unwrap();
        params
    }

    #[test]
    fn zero_weights_give_zero_state() {
        let mut params = ParameterSet::new();
        params.add_zeros("fw.w_ih", &[12, 2]).unwrap();
        params.add_zeros("fw.w_hh", &[12, 3]).unwrap();
        params.add_zeros("fw.b", &[12]).unwrap();
        params.add_zeros("bw.w_ih", &[12, 2]).unwrap();
        params.add_zeros("bw.w_hh", &[12, 3]).unwrap();
        params.add_zeros("bw.b", &[12]).unwrap();
        let mut tape = Tape::new();
        let (fw, _) = weights(&mut tape, &params);
        let x = tape.constant(Tensor::from_vec(&[2], vec![1.0, -1.0]).unwrap());
        let zero = tape.constant(Tensor::zeros(&[3]));
        let (h, _) = lstm_cell(&mut tape, &fw, x, zero, zero).unwrap();
        assert_eq!(tape.value(h).data, vec![0.0; 3]);
    }

    #[test]
    fn repeated_application_stays_bounded() {
        let params = random_params(2);
        let mut tape = Tape::new();
        let (fw, _) = weights(&mut tape, &params);
        let x = tape.constant(Tensor::from_vec(&[2], vec![3.0, -2.0]).unwrap());
        let zero = tape.constant(Tensor::zeros(&[3]));
        let (mut h, mut c) = (zero, zero);
        for _ in 0..200 {
            let (h2, c2) = lstm_cell(&mut tape, &fw, x, h, c).unwrap();
            h = h2;
            c = c2;
            for &v in &tape.value(h).data {
                assert!(v.abs() <= 1.0);
            }
        }
    }

    #[test]
    fn bilstm_shapes_and_length_one() {
        let params = random_params(3);
        let mut tape = Tape::new();
        let (fw, bw) = weights(&mut tape, &params);
        let x = tape.constant(Tensor::from_vec(&[2], vec![0.5, 0.5]).unwrap());
        let (f, b) = bilstm(&mut tape, &fw, &bw, &[x]).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(b.len(), 1);
        assert_eq!(tape.shape(f[0]), &[3]);
    }

    #[test]
    fn bilstm_rejects_empty_sequence() {
        let params = random_params(4);
        let mut tape = Tape::new();
        let (fw, bw) = weights(&mut tape, &params);
        assert!(bilstm(&mut tape, &fw, &bw, &[]).is_err());
    }

    #[test]
    fn reversing_input_swaps_direction_roles() {
        // With fw and bw weights equal, the final forward state on xs equals
        // the final backward state on reversed xs (direct-evaluation oracle).
        let mut rng = stream(5, "lstm-rev");
        let mut params = ParameterSet::new();
        LstmWeights::register(&mut params, "fw", 2, 3, 0.5, &mut rng).unwrap();
        let mut tape = Tape::new();
        let bound = tape.bind(&params);
        let w = LstmWeights::bind(&bound, "fw", 3).unwrap();
        let xs: Vec<Var> = (0..4)
            .map(|_| {
                let v: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
                tape.constant(Tensor::from_vec(&[2], v).unwrap())
            })
            .collect();
        let (f, b) = bilstm(&mut tape, &w, &w, &xs).unwrap();
        let rev: Vec<Var> = xs.iter().rev().copied().collect();
        let (f2, b2) = bilstm(&mut tape, &w, &w, &rev).unwrap();
        assert_eq!(tape.value(*f.last().unwrap()).data, tape.value(b2[0]).data);
        assert_eq!(tape.value(b[0]).data, tape.value(*f2.last().unwrap()).data);
    }

    #[test]
    fn states_finite_for_large_inputs() {
        let params = random_params(6);
        let mut tape = Tape::new();
        let (fw, bw) = weights(&mut tape, &params);
        let mut rng = stream(7, "lstm-range");
        let xs: Vec<Var> = (0..6)
            .map(|_| {
                let v: Vec<f64> = (0..2).map(|_| rng.gen_range(-10.0..10.0)).collect();
                tape.constant(Tensor::from_vec(&[2], v).unwrap())
            })
            .collect();
        let (f, b) = bilstm(&mut tape, &fw, &bw, &xs).unwrap();
        for s in f.iter().chain(b.iter()) {
            assert!(tape.value(*s).data.iter().all(|v| v.is_finite()));
        }
    }
}
