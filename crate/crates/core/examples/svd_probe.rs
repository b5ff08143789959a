use nalgebra::DMatrix;

fn probe(l: usize, q: usize, n1: usize, n2: usize) {
    let scale0 = 1.0 / (l as f64).sqrt();
    let scale = (2.0 / l as f64).sqrt();
    let forward = DMatrix::from_fn(q, l, |k, n| {
        let angle = std::f64::consts::PI * (2 * n + 1) as f64 * k as f64 / (2.0 * l as f64);
        angle.cos() * if k == 0 { scale0 } else { scale }
    });
    let inverse = forward.transpose();
    let kept: Vec<usize> = (0..n1).chain(n2..l).collect();
    let mut reduced = DMatrix::<f64>::zeros(kept.len(), q);
    for (r, &src) in kept.iter().enumerate() {
        reduced.row_mut(r).copy_from(&inverse.row(src));
    }
    let svd = reduced.svd(false, false);
    println!(
        "L={l} q={q} window [{n1},{n2}): sv {:.3e} .. {:.3e}  cond {:.3e}",
        svd.singular_values.min(),
        svd.singular_values.max(),
        svd.singular_values.max() / svd.singular_values.min()
    );
}

fn main() {
    probe(300, 50, 100, 200);
    probe(240, 30, 90, 190);
    probe(240, 30, 0, 60);
    probe(240, 30, 200, 240);
    probe(1000, 30, 500, 600);
    probe(1000, 30, 0, 100);
    probe(1000, 30, 900, 1000);
    probe(400, 12, 60, 140);
}
