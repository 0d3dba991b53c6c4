use cir_core::{systems, umv_gain, NoiseSpec};
use nalgebra::{DMatrix, DVector};

fn main() {
    let m = systems::rc_circuit();
    let noise = NoiseSpec::isotropic(&m, 1e-10, 1e-10, 0).unwrap();
    // reproduce P_umv after step 0
    let p0 = DMatrix::<f64>::identity(2, 2);
    let prior0 = m.a() * &p0 * m.a().transpose() + noise.q();
    let g0 = umv_gain(&prior0, &m, &noise).unwrap();
    println!("p_post(0) = {:.6e}", g0.p_post);
    let prior1 = m.a() * &g0.p_post * m.a().transpose() + noise.q();
    println!("prior1 = {:.6e}", prior1);
    let rt = m.c() * &prior1 * m.c().transpose() + noise.r();
    println!("rt = {:.6e}", rt);
    let eig = rt.clone().symmetric_eigen();
    println!("rt eigenvalues = {:.6e}", eig.eigenvalues);
    let g1 = umv_gain(&prior1, &m, &noise).unwrap();
    println!("gain = {:.6e}", g1.gain);
    println!("p_post(1) = {:.6e}", g1.p_post);
    let v = m.c() * m.b();
    println!("|L V - B| = {:.3e}", (&g1.gain * v - m.b()).amax());
    let _ = DVector::<f64>::zeros(1);
}
