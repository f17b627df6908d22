//! Encrypts two vectors, multiplies them and folds the product into slot 0.
//!
//!     cargo run --release --example ckks_inner_product -- [k]

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use tip::ckks::{CkksContext, CkksParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let k: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(384);
    let ctx = CkksContext::new(CkksParams::desk_scale())?;

    let t = Instant::now();
    let keys = ctx.keygen(1);
    println!("keygen           {:>8.1} ms", t.elapsed().as_secs_f64() * 1e3);

    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let a: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let expected: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();

    let level = ctx.max_level();
    let t = Instant::now();
    let ct_a = ctx.encrypt(&keys.public_key, &ctx.encode(&a, level)?, &mut rng);
    let ct_b = ctx.encrypt(&keys.public_key, &ctx.encode(&b, level)?, &mut rng);
    println!("encrypt x2       {:>8.1} ms", t.elapsed().as_secs_f64() * 1e3);

    let t = Instant::now();
    let ip = ctx.inner_product(&ct_a, &ct_b, k, &keys.eval_keys)?;
    println!("inner product    {:>8.1} ms", t.elapsed().as_secs_f64() * 1e3);

    let t = Instant::now();
    let got = ctx.decode(&ctx.decrypt(&keys.secret_key, &ip)?)[0];
    println!("decrypt          {:>8.1} ms", t.elapsed().as_secs_f64() * 1e3);

    println!("plaintext  {expected:.12}");
    println!("encrypted  {got:.12}");
    println!("abs error  {:.3e}", (got - expected).abs());
    if let Some(n) = ip.noise() {
        println!("tracked    {:.3e}", n.error);
    }
    println!("ciphertext {} bytes", ctx.serialize_ciphertext(&ct_a).len());
    Ok(())
}
