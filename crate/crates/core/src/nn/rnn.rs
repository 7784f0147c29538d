use crate::error::{Error, Result};
use crate::nn::kernels::{add_into, gemv_acc, gemv_t_acc, outer_acc, sigmoid};
use crate::nn::{mask_values, Activation, Arch, CellType, Gradients, Network};
use crate::numerics::{Matrix, RngStream};

/// Cached values of one cell step.
#[derive(Debug, Clone)]
struct Step {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    /// Vanilla: pre-activation. LSTM: gate pre-activations `[i f g o]`.
    /// GRU: `[z r]` pre-activations followed by the candidate pre-activation.
    pre: Vec<f64>,
    /// LSTM only: previous and current cell state.
    c_prev: Vec<f64>,
    c: Vec<f64>,
}

#[derive(Debug, Clone)]
struct DirectionTape {
    /// Frame index processed at each step.
    order: Vec<usize>,
    steps: Vec<Step>,
}

#[derive(Debug, Clone)]
pub(crate) struct RnnTape {
    /// `layers[l][d]`.
    layers: Vec<Vec<DirectionTape>>,
    /// Dropout masks on the output sequence of layers `0..L-1`, flattened `t x width`.
    between_masks: Vec<Option<Vec<f64>>>,
    readout: Vec<f64>,
    readout_mask: Option<Vec<f64>>,
}

fn check_window(net: &Network, window: &Matrix) -> Result<()> {
    if net.spec().arch != Arch::Rnn {
        return Err(Error::WrongArch {
            expected: "rnn".into(),
            actual: net.spec().arch.to_string(),
        });
    }
    let t = net.spec().seq_len();
    if window.shape() != (t, net.spec().input_dim) {
        return Err(Error::ShapeMismatch(format!(
            "window is {}x{}, network expects {}x{}",
            window.rows(),
            window.cols(),
            t,
            net.spec().input_dim
        )));
    }
    Ok(())
}

/// Many-to-one evaluation pass over a `t x F_in` window.
pub fn forward_rnn(net: &Network, window: &Matrix) -> Result<Vec<f64>> {
    check_window(net, window)?;
    net.predict(window.as_slice())
}

/// Final state fed to the dense head: `h_T` or `[h_fwd_T, h_bwd_1]`.
pub fn rnn_readout(net: &Network, window: &Matrix) -> Result<Vec<f64>> {
    check_window(net, window)?;
    Ok(forward(net, window.as_slice(), None).1.readout)
}

struct LayerParams<'a> {
    w: &'a crate::nn::Param,
    u: &'a crate::nn::Param,
    b: &'a crate::nn::Param,
}

fn layer_params(net: &Network, l: usize, d: usize) -> LayerParams<'_> {
    let dirs = net.spec().cell.expect("rnn").directions();
    let base = 3 * (l * dirs + d);
    let p = net.params();
    LayerParams {
        w: &p[base],
        u: &p[base + 1],
        b: &p[base + 2],
    }
}

fn run_direction(
    cell: CellType,
    act: Activation,
    lp: &LayerParams<'_>,
    seq: &[Vec<f64>],
    reverse: bool,
) -> (Vec<Vec<f64>>, DirectionTape) {
    let t = seq.len();
    let k = lp.u.cols;
    let order: Vec<usize> = if reverse {
        (0..t).rev().collect()
    } else {
        (0..t).collect()
    };
    let mut outs = vec![Vec::new(); t];
    let mut steps = Vec::with_capacity(t);
    let mut h = vec![0.0; k];
    let mut c = vec![0.0; k];
    for &tau in &order {
        let x = &seq[tau];
        let mut pre = lp.b.values.clone();
        gemv_acc(&lp.w.values, lp.w.cols, 0..lp.w.rows, x, &mut pre);
        let (h_new, c_prev, c_new) = match cell {
            CellType::Vanilla => {
                gemv_acc(&lp.u.values, k, 0..k, &h, &mut pre);
                let hn: Vec<f64> = pre.iter().map(|&z| act.apply(z)).collect();
                (hn, Vec::new(), Vec::new())
            }
            CellType::Lstm => {
                gemv_acc(&lp.u.values, k, 0..4 * k, &h, &mut pre);
                let mut cn = vec![0.0; k];
                let mut hn = vec![0.0; k];
                for j in 0..k {
                    let i = sigmoid(pre[j]);
                    let f = sigmoid(pre[k + j]);
                    let g = act.apply(pre[2 * k + j]);
                    let o = sigmoid(pre[3 * k + j]);
                    cn[j] = f * c[j] + i * g;
                    hn[j] = o * act.apply(cn[j]);
                }
                (hn, std::mem::take(&mut c), cn)
            }
            CellType::Gru => {
                gemv_acc(&lp.u.values, k, 0..2 * k, &h, &mut pre[..2 * k]);
                let rh: Vec<f64> = (0..k).map(|j| sigmoid(pre[k + j]) * h[j]).collect();
                gemv_acc(&lp.u.values, k, 2 * k..3 * k, &rh, &mut pre[2 * k..]);
                let hn: Vec<f64> = (0..k)
                    .map(|j| {
                        let z = sigmoid(pre[j]);
                        let cand = act.apply(pre[2 * k + j]);
                        (1.0 - z) * h[j] + z * cand
                    })
                    .collect();
                (hn, Vec::new(), Vec::new())
            }
        };
        if cell == CellType::Lstm {
            c = c_new.clone();
        }
        steps.push(Step {
            x: x.clone(),
            h_prev: std::mem::replace(&mut h, h_new.clone()),
            pre,
            c_prev,
            c: c_new,
        });
        outs[tau] = h_new;
    }
    (outs, DirectionTape { order, steps })
}

pub(crate) fn forward(net: &Network, input: &[f64], mut dropout: Option<&mut RngStream>) -> (Vec<f64>, RnnTape) {
    let spec = net.spec();
    let cell = spec.cell.expect("rnn");
    let dirs = cell.directions();
    let t = spec.seq_len();
    let n_in = spec.input_dim;
    let p = spec.dropout_p;
    let mut seq: Vec<Vec<f64>> = (0..t).map(|i| input[i * n_in..(i + 1) * n_in].to_vec()).collect();
    let mut layers = Vec::with_capacity(spec.hidden_layers);
    let mut between_masks = Vec::new();
    let mut last_dir_outs: Vec<Vec<Vec<f64>>> = Vec::new();
    for l in 0..spec.hidden_layers {
        let mut dir_tapes = Vec::with_capacity(dirs);
        let mut dir_outs = Vec::with_capacity(dirs);
        for d in 0..dirs {
            let lp = layer_params(net, l, d);
            let (outs, tape) = run_direction(cell.cell, spec.activation, &lp, &seq, d == 1);
            dir_tapes.push(tape);
            dir_outs.push(outs);
        }
        layers.push(dir_tapes);
        if l + 1 < spec.hidden_layers {
            let mut next: Vec<Vec<f64>> = (0..t)
                .map(|tau| dir_outs.iter().flat_map(|o| o[tau].iter().copied()).collect())
                .collect();
            let width = next[0].len();
            let mask = dropout.as_deref_mut().map(|rng| mask_values(rng, t * width, p));
            if let Some(m) = &mask {
                for (tau, row) in next.iter_mut().enumerate() {
                    for (v, mv) in row.iter_mut().zip(&m[tau * width..(tau + 1) * width]) {
                        *v *= mv;
                    }
                }
            }
            between_masks.push(mask);
            seq = next;
        } else {
            last_dir_outs = dir_outs;
        }
    }
    // forward direction ends at the last frame, backward at the first
    let mut readout: Vec<f64> = last_dir_outs[0][t - 1].clone();
    if dirs == 2 {
        readout.extend_from_slice(&last_dir_outs[1][0]);
    }
    let readout_mask = dropout.map(|rng| mask_values(rng, readout.len(), p));
    let mut head_in = readout.clone();
    if let Some(m) = &readout_mask {
        for (v, mv) in head_in.iter_mut().zip(m) {
            *v *= mv;
        }
    }
    let params = net.params();
    let (hw, hb) = (&params[params.len() - 2], &params[params.len() - 1]);
    let mut y = hb.values.clone();
    gemv_acc(&hw.values, hw.cols, 0..hw.rows, &head_in, &mut y);
    (
        y,
        RnnTape {
            layers,
            between_masks,
            readout: head_in,
            readout_mask,
        },
    )
}

/// Backpropagation through time for one direction of one layer.
///
/// `dh_seq[tau]` is the loss gradient w.r.t. this direction's output at frame
/// `tau`; returns the gradient w.r.t. the layer input at every frame.
#[allow(clippy::too_many_arguments)]
fn backward_direction(
    cell: CellType,
    act: Activation,
    lp: &LayerParams<'_>,
    tape: &DirectionTape,
    dh_seq: &[Vec<f64>],
    grads_w: &mut [f64],
    grads_u: &mut [f64],
    grads_b: &mut [f64],
) -> Vec<Vec<f64>> {
    let k = lp.u.cols;
    let n_in = lp.w.cols;
    let t = tape.order.len();
    let mut dx_seq = vec![vec![0.0; n_in]; t];
    let mut dh_next = vec![0.0; k];
    let mut dc_next = vec![0.0; k];
    for s in (0..t).rev() {
        let tau = tape.order[s];
        let st = &tape.steps[s];
        let mut dh = dh_seq[tau].clone();
        add_into(&mut dh, &dh_next);
        let mut dh_prev = vec![0.0; k];
        match cell {
            CellType::Vanilla => {
                let dpre: Vec<f64> = dh
                    .iter()
                    .zip(&st.pre)
                    .map(|(d, &z)| d * act.derivative(z))
                    .collect();
                outer_acc(grads_w, n_in, 0..k, &dpre, &st.x);
                outer_acc(grads_u, k, 0..k, &dpre, &st.h_prev);
                add_into(grads_b, &dpre);
                gemv_t_acc(&lp.w.values, n_in, 0..k, &dpre, &mut dx_seq[tau]);
                gemv_t_acc(&lp.u.values, k, 0..k, &dpre, &mut dh_prev);
            }
            CellType::Lstm => {
                let mut dpre = vec![0.0; 4 * k];
                for j in 0..k {
                    let i = sigmoid(st.pre[j]);
                    let f = sigmoid(st.pre[k + j]);
                    let zg = st.pre[2 * k + j];
                    let g = act.apply(zg);
                    let o = sigmoid(st.pre[3 * k + j]);
                    let c = st.c[j];
                    let ac = act.apply(c);
                    let d_o = dh[j] * ac;
                    let dc = dc_next[j] + dh[j] * o * act.derivative(c);
                    dpre[j] = dc * g * i * (1.0 - i);
                    dpre[k + j] = dc * st.c_prev[j] * f * (1.0 - f);
                    dpre[2 * k + j] = dc * i * act.derivative(zg);
                    dpre[3 * k + j] = d_o * o * (1.0 - o);
                    dc_next[j] = dc * f;
                }
                outer_acc(grads_w, n_in, 0..4 * k, &dpre, &st.x);
                outer_acc(grads_u, k, 0..4 * k, &dpre, &st.h_prev);
                add_into(grads_b, &dpre);
                gemv_t_acc(&lp.w.values, n_in, 0..4 * k, &dpre, &mut dx_seq[tau]);
                gemv_t_acc(&lp.u.values, k, 0..4 * k, &dpre, &mut dh_prev);
            }
            CellType::Gru => {
                let mut dpre = vec![0.0; 3 * k];
                let mut r = vec![0.0; k];
                let mut rh = vec![0.0; k];
                for j in 0..k {
                    let z = sigmoid(st.pre[j]);
                    r[j] = sigmoid(st.pre[k + j]);
                    rh[j] = r[j] * st.h_prev[j];
                    let za = st.pre[2 * k + j];
                    let cand = act.apply(za);
                    dpre[j] = dh[j] * (cand - st.h_prev[j]) * z * (1.0 - z);
                    dpre[2 * k + j] = dh[j] * z * act.derivative(za);
                    dh_prev[j] = dh[j] * (1.0 - z);
                }
                // candidate path: U_h (r * h_prev)
                let mut d_rh = vec![0.0; k];
                gemv_t_acc(&lp.u.values, k, 2 * k..3 * k, &dpre[2 * k..], &mut d_rh);
                for j in 0..k {
                    dpre[k + j] = d_rh[j] * st.h_prev[j] * r[j] * (1.0 - r[j]);
                    dh_prev[j] += d_rh[j] * r[j];
                }
                outer_acc(grads_w, n_in, 0..3 * k, &dpre, &st.x);
                outer_acc(grads_u, k, 0..2 * k, &dpre[..2 * k], &st.h_prev);
                outer_acc(grads_u, k, 2 * k..3 * k, &dpre[2 * k..], &rh);
                add_into(grads_b, &dpre);
                gemv_t_acc(&lp.w.values, n_in, 0..3 * k, &dpre, &mut dx_seq[tau]);
                gemv_t_acc(&lp.u.values, k, 0..2 * k, &dpre[..2 * k], &mut dh_prev);
            }
        }
        dh_next = dh_prev;
    }
    dx_seq
}

pub(crate) fn backward(net: &Network, tape: &RnnTape, dy: &[f64], grads: &mut Gradients) {
    let spec = net.spec();
    let cell = spec.cell.expect("rnn");
    let dirs = cell.directions();
    let k = spec.nodes_per_layer;
    let t = spec.seq_len();
    let params = net.params();
    let np = params.len();
    let hw = &params[np - 2];
    outer_acc(&mut grads.values[np - 2], hw.cols, 0..hw.rows, dy, &tape.readout);
    add_into(&mut grads.values[np - 1], dy);
    let mut dr = vec![0.0; hw.cols];
    gemv_t_acc(&hw.values, hw.cols, 0..hw.rows, dy, &mut dr);
    if let Some(m) = &tape.readout_mask {
        for (d, mv) in dr.iter_mut().zip(m) {
            *d *= mv;
        }
    }
    // gradient w.r.t. the top layer's concatenated output sequence
    let width = dirs * k;
    let mut d_out: Vec<Vec<f64>> = vec![vec![0.0; width]; t];
    d_out[t - 1][..k].copy_from_slice(&dr[..k]);
    if dirs == 2 {
        d_out[0][k..].copy_from_slice(&dr[k..]);
    }
    for l in (0..spec.hidden_layers).rev() {
        let mut d_in: Option<Vec<Vec<f64>>> = None;
        for d in 0..dirs {
            let lp = layer_params(net, l, d);
            let dh_seq: Vec<Vec<f64>> = d_out.iter().map(|row| row[d * k..(d + 1) * k].to_vec()).collect();
            let base = 3 * (l * dirs + d);
            let (head, tail) = grads.values.split_at_mut(base + 1);
            let (gu, rest) = tail.split_at_mut(1);
            let dx = backward_direction(
                cell.cell,
                spec.activation,
                &lp,
                &tape.layers[l][d],
                &dh_seq,
                &mut head[base],
                &mut gu[0],
                &mut rest[0],
            );
            match &mut d_in {
                None => d_in = Some(dx),
                Some(acc) => {
                    for (a, b) in acc.iter_mut().zip(&dx) {
                        add_into(a, b);
                    }
                }
            }
        }
        if l == 0 {
            break;
        }
        let mut below = d_in.expect("at least one direction");
        if let Some(m) = &tape.between_masks[l - 1] {
            let w = below[0].len();
            for (tau, row) in below.iter_mut().enumerate() {
                for (v, mv) in row.iter_mut().zip(&m[tau * w..(tau + 1) * w]) {
                    *v *= mv;
                }
            }
        }
        d_out = below;
    }
}
