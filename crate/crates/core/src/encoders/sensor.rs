use crate::nn::{linear, linear_backward, relu_backward, relu_in_place};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub struct SensorCache {
    x: Tensor,
    h: Tensor,
    s: Tensor,
}

/// `ReLU(ReLU(x·W1 + b1)·W2 + b2)`, 3 → 64 → 128.
pub fn sensor_encode(x: &[f64; 3], params: &ParamStore) -> (Vec<f64>, SensorCache) {
    let x = Tensor::row_vector(x.to_vec());
    let mut h = linear(&x, params.get("sensor.fc1.weight"), Some(params.get("sensor.fc1.bias")));
    relu_in_place(&mut h);
    let mut s = linear(&h, params.get("sensor.fc2.weight"), Some(params.get("sensor.fc2.bias")));
    relu_in_place(&mut s);
    (s.data().to_vec(), SensorCache { x, h, s })
}

pub fn sensor_backward(params: &ParamStore, grads: &mut ParamStore, cache: &SensorCache, ds: &[f64]) {
    let ds = relu_backward(&cache.s, &Tensor::row_vector(ds.to_vec()));
    let dh = backward_linear(params, grads, "sensor.fc2", &cache.h, &ds, true).expect("dx requested");
    let dh = relu_backward(&cache.h, &dh);
    backward_linear(params, grads, "sensor.fc1", &cache.x, &dh, false);
}

fn backward_linear(
    params: &ParamStore,
    grads: &mut ParamStore,
    prefix: &str,
    x: &Tensor,
    dy: &Tensor,
    need_dx: bool,
) -> Option<Tensor> {
    let wname = format!("{prefix}.weight");
    let bname = format!("{prefix}.bias");
    let mut db = std::mem::replace(grads.get_mut(&bname), Tensor::zeros(&[0]));
    let dx = linear_backward(x, params.get(&wname), dy, grads.get_mut(&wname), Some(&mut db), need_dx);
    *grads.get_mut(&bname) = db;
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{init_params, ModelConfig};

    #[test]
    fn zero_input_zero_bias_gives_zero() {
        let params = init_params(&ModelConfig::tiny(10), 4).unwrap();
        let (s, _) = sensor_encode(&[0.0; 3], &params);
        assert_eq!(s.len(), 128);
        assert!(s.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn matches_straight_line_oracle() {
        let mut params = init_params(&ModelConfig::tiny(10), 9).unwrap();
        for (i, b) in params.get_mut("sensor.fc1.bias").data_mut().iter_mut().enumerate() {
            *b = ((i * 7 % 11) as f64 - 5.0) * 0.03;
        }
        for (i, b) in params.get_mut("sensor.fc2.bias").data_mut().iter_mut().enumerate() {
            *b = ((i * 5 % 13) as f64 - 6.0) * 0.02;
        }
        let x = [0.7, -1.3, 2.1];
        let (s, _) = sensor_encode(&x, &params);
        let w1 = params.get("sensor.fc1.weight");
        let b1 = params.get("sensor.fc1.bias").data();
        let w2 = params.get("sensor.fc2.weight");
        let b2 = params.get("sensor.fc2.bias").data();
        let mut h = [0.0; 64];
        for j in 0..64 {
            let mut acc = b1[j];
            for i in 0..3 {
                acc += x[i] * w1.data()[i * 64 + j];
            }
            h[j] = acc.max(0.0);
        }
        for k in 0..128 {
            let mut acc = b2[k];
            for j in 0..64 {
                acc += h[j] * w2.data()[j * 128 + k];
            }
            assert!((s[k] - acc.max(0.0)).abs() < 1e-12);
        }
    }
}
