/// Gaussian-window SSIM with the usual constants for unit dynamic range.
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, w) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *w = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|w| w / s)
}

/// Separable filtering keeping only windows fully inside the image.
fn filter_valid(img: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> (Vec<f64>, usize, usize) {
    let ow = w + 1 - SSIM_WINDOW;
    let oh = h + 1 - SSIM_WINDOW;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * img[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * tmp[(y + i) * ow + x]).sum();
        }
    }
    (out, ow, oh)
}

/// Per-window SSIM map of two single-channel images in `[0, 1]`.
pub fn ssim_map(a: &[f64], b: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    assert_eq!(a.len(), w * h);
    assert_eq!(b.len(), w * h);
    assert!(w >= SSIM_WINDOW && h >= SSIM_WINDOW, "image smaller than the SSIM window");
    let k = gaussian_kernel();
    let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<_>>();
    let (mu_a, ow, oh) = filter_valid(a, w, h, &k);
    let (mu_b, ..) = filter_valid(b, w, h, &k);
    let (aa, ..) = filter_valid(&prod(a, a), w, h, &k);
    let (bb, ..) = filter_valid(&prod(b, b), w, h, &k);
    let (ab, ..) = filter_valid(&prod(a, b), w, h, &k);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let map = (0..ow * oh)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .collect();
    (map, ow, oh)
}

/// Mean SSIM over channels of interleaved images, averaged over windows whose
/// center pixel is selected by `mask` (all windows when `mask` is `None`).
pub fn ssim(a: &[f64], b: &[f64], w: usize, h: usize, channels: usize, mask: Option<&[bool]>) -> f64 {
    let half = SSIM_WINDOW / 2;
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..channels {
        let pa: Vec<f64> = a.iter().skip(c).step_by(channels).copied().collect();
        let pb: Vec<f64> = b.iter().skip(c).step_by(channels).copied().collect();
        let (map, ow, oh) = ssim_map(&pa, &pb, w, h);
        for y in 0..oh {
            for x in 0..ow {
                let center = (y + half) * w + x + half;
                if mask.is_none_or(|m| m[center]) {
                    total += map[y * ow + x];
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        1.0
    } else {
        total / count as f64
    }
}
