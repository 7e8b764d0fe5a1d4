//! Backward pass of a shrunken MBR-FCN against central differences.

use mbrsep::model::{init_weights, MbrFcnConfig, Network};
use mbrsep::tensor::{grad_check, mse_loss, BnMode, Tensor};
use rand::SeedableRng;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() -> mbrsep::Result<()> {
    let spec = MbrFcnConfig::shrunken().build()?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let x = Tensor::<f64>::uniform(spec.input_shape(2), 0.0, 1.0, &mut rng);
    let y = Tensor::<f64>::uniform(spec.input_shape(2), 0.0, 1.0, &mut rng);
    let mut net = Network::new(spec.clone(), init_weights(&spec, 0))?;
    let (loss, grads) = net.mse_step(&x, &y)?;
    println!("loss {loss:.6}");
    let weights = net.weights().clone();
    for (i, p) in weights.params.iter().enumerate() {
        let Some(g) = &grads.params[i] else { continue };
        if g.max_abs() < 1e-10 {
            println!("{:16} zero gradient (cancelled by batch norm)", p.name);
            continue;
        }
        let probes: Vec<usize> = (0..p.tensor.len()).step_by(p.tensor.len().div_ceil(4)).collect();
        let rep = grad_check(
            |w| {
                net.weights_mut().params[i].tensor = w.clone();
                Ok(mse_loss(&net.forward(&x, BnMode::Train)?, &y)?.0)
            },
            &p.tensor,
            g,
            1e-6,
            1e-4,
            Some(&probes),
        )?;
        net.weights_mut().params[i].tensor = p.tensor.clone();
        println!("{:16} relative error {:.2e}", p.name, rep.max_relative_error);
    }
    Ok(())
}
