use crate::error::{Error, Result};
use crate::nn::kernels::{add_into, gemv_acc, gemv_t_acc, outer_acc};
use crate::nn::{mask_values, Activation, Arch, Gradients, Network};
use crate::numerics::RngStream;

#[derive(Debug, Clone)]
pub(crate) struct FfnnTape {
    /// Layer inputs `h_0 .. h_N` (post-dropout).
    hs: Vec<Vec<f64>>,
    /// Hidden pre-activations `z_1 .. z_N`.
    zs: Vec<Vec<f64>>,
    masks: Vec<Option<Vec<f64>>>,
}

/// Evaluation-mode forward pass of a linear or feed-forward network.
pub fn forward_ffnn(net: &Network, x: &[f64]) -> Result<Vec<f64>> {
    if !matches!(net.spec().arch, Arch::Ffnn | Arch::Linear) {
        return Err(Error::WrongArch {
            expected: "ffnn".into(),
            actual: net.spec().arch.to_string(),
        });
    }
    net.predict(x)
}

pub(crate) fn forward(net: &Network, x: &[f64], mut dropout: Option<&mut RngStream>) -> (Vec<f64>, FfnnTape) {
    let spec = net.spec();
    let params = net.params();
    let act = spec.activation;
    let n_hidden = spec.hidden_layers;
    let mut tape = FfnnTape {
        hs: Vec::with_capacity(n_hidden + 1),
        zs: Vec::with_capacity(n_hidden),
        masks: Vec::with_capacity(n_hidden),
    };
    let mut h = x.to_vec();
    for l in 0..n_hidden {
        let (w, b) = (&params[2 * l], &params[2 * l + 1]);
        let mut z = b.values.clone();
        gemv_acc(&w.values, w.cols, 0..w.rows, &h, &mut z);
        let mut a: Vec<f64> = z.iter().map(|&v| act.apply(v)).collect();
        let mask = dropout
            .as_deref_mut()
            .map(|rng| mask_values(rng, a.len(), spec.dropout_p));
        if let Some(m) = &mask {
            for (av, mv) in a.iter_mut().zip(m) {
                *av *= mv;
            }
        }
        tape.hs.push(std::mem::replace(&mut h, a));
        tape.zs.push(z);
        tape.masks.push(mask);
    }
    let (w, b) = (&params[2 * n_hidden], &params[2 * n_hidden + 1]);
    let mut y = b.values.clone();
    gemv_acc(&w.values, w.cols, 0..w.rows, &h, &mut y);
    tape.hs.push(h);
    (y, tape)
}

pub(crate) fn backward(net: &Network, tape: &FfnnTape, dy: &[f64], grads: &mut Gradients) {
    let spec = net.spec();
    let params = net.params();
    let act: Activation = spec.activation;
    let n_hidden = spec.hidden_layers;
    let out_w = &params[2 * n_hidden];
    outer_acc(&mut grads.values[2 * n_hidden], out_w.cols, 0..out_w.rows, dy, &tape.hs[n_hidden]);
    add_into(&mut grads.values[2 * n_hidden + 1], dy);
    if n_hidden == 0 {
        return;
    }
    let mut dh = vec![0.0; out_w.cols];
    gemv_t_acc(&out_w.values, out_w.cols, 0..out_w.rows, dy, &mut dh);
    for l in (0..n_hidden).rev() {
        let w = &params[2 * l];
        let mut dz = dh;
        if let Some(m) = &tape.masks[l] {
            for (d, mv) in dz.iter_mut().zip(m) {
                *d *= mv;
            }
        }
        for (d, &z) in dz.iter_mut().zip(&tape.zs[l]) {
            *d *= act.derivative(z);
        }
        outer_acc(&mut grads.values[2 * l], w.cols, 0..w.rows, &dz, &tape.hs[l]);
        add_into(&mut grads.values[2 * l + 1], &dz);
        if l > 0 {
            let mut dprev = vec![0.0; w.cols];
            gemv_t_acc(&w.values, w.cols, 0..w.rows, &dz, &mut dprev);
            dh = dprev;
        } else {
            break;
        }
    }
}
