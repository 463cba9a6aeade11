use nalgebra::DVector;

/// Euclidean projection onto `{x >= 0, Σ x_i = radius}` by sort-and-threshold.
pub fn project_simplex_eq(v: &DVector<f64>, radius: f64) -> DVector<f64> {
    let mut u: Vec<f64> = v.iter().copied().collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cumsum += ui;
        let t = (cumsum - radius) / (i as f64 + 1.0);
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.map(|x| (x - theta).max(0.0))
}

/// Euclidean projection onto `{x >= 0, Σ x_i <= radius}`.
pub fn project_simplex(v: &DVector<f64>, radius: f64) -> DVector<f64> {
    assert!(radius > 0.0, "simplex radius must be positive");
    let clipped = v.map(|x| x.max(0.0));
    if clipped.sum() <= radius {
        clipped
    } else {
        project_simplex_eq(v, radius)
    }
}
