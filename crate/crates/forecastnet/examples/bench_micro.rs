use forecastnet::model::{Model, ModelSpec, Variant};
use forecastnet::tensor::Tensor;
use std::time::Instant;

fn main() {
    let m = Model::build(&ModelSpec::new(Variant::Fn2, 20).with_seed(0)).unwrap();
    let x = Tensor::from_vec((0..40).map(|i| (i as f64 * 0.1).sin() * 0.5 + 0.5).collect());
    let y = Tensor::from_vec((0..20).map(|i| (i as f64 * 0.2).cos() * 0.5 + 0.5).collect());
    // forward only
    let t0 = Instant::now();
    let reps = 2000;
    for _ in 0..reps { let _ = m.forward_train(&x, &y).unwrap(); }
    let fwd = t0.elapsed().as_secs_f64() / reps as f64;
    // forward + backward
    let mut m2 = m.clone();
    let t0 = Instant::now();
    for _ in 0..reps {
        let mut pass = m2.forward_train(&x, &y).unwrap();
        let grads = pass.graph.backward(pass.loss).unwrap();
        pass.graph.accumulate_param_grads(&grads, m2.params_mut());
    }
    let full = t0.elapsed().as_secs_f64() / reps as f64;
    println!("FN2 tau20: forward {:.1} us, fwd+bwd {:.1} us  -> epoch(3445) {:.2}s", fwd*1e6, full*1e6, full*3445.0);
}
