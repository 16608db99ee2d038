/// Closed-form solution of `y'' + y' + lambda^2 y = 0` with `y(0) = u0`, `y'(0) = v0`,
/// returned as `(y(t), y'(t))`.
///
/// The three regimes (`lambda^2` above, at or below `1/4`) are written with
/// `sin(w t)/w` and `sinh(k t)/k`, which stay accurate near the critical case.
///
/// # Panics
/// If `lambda <= 0`.
pub fn exact_linear_mode(lambda: f64, u0: f64, v0: f64, t: f64) -> (f64, f64) {
    assert!(lambda > 0.0, "exact_linear_mode needs lambda > 0, got {lambda}");
    let disc = 0.25 - lambda * lambda;
    let b = v0 + 0.5 * u0;
    let env = (-0.5 * t).exp();
    // c(t) and s(t) = c-partner with s(0) = 0, s'(0) = 1
    let (c, s, dc, ds) = if disc < -1e-14 {
        let w = (-disc).sqrt();
        let (sn, cs) = (w * t).sin_cos();
        (cs, sn / w, -w * sn, cs)
    } else if disc > 1e-14 {
        let k = disc.sqrt();
        let (sh, ch) = ((k * t).sinh(), (k * t).cosh());
        (ch, sh / k, k * sh, ch)
    } else {
        (1.0, t, 0.0, 1.0)
    };
    let y = env * (u0 * c + b * s);
    let dy = -0.5 * y + env * (u0 * dc + b * ds);
    (y, dy)
}
