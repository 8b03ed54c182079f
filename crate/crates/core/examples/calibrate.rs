//! Print calibration diagnostics for simulated datasets.
//!
//! Usage: `cargo run --release --example calibrate -- [seeds] [key=value ...]`

use dualchannel::decay::{bin_adoption_by_distance, decay_sample, fit_alternatives, DEFAULT_BIN_WIDTH_KM};
use dualchannel::geo::{distance_matrix, DistanceKernel};
use dualchannel::simulate::{generate, SimConfig};

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seeds: u64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(1);
    let mut base = serde_json::to_value(SimConfig::default()).unwrap();
    for kv in args.iter().skip(1) {
        let (k, v) = kv.split_once('=').expect("key=value");
        let mut slot = &mut base;
        for part in k.split('.') {
            slot = match part.parse::<usize>() {
                Ok(i) => &mut slot[i],
                Err(_) => &mut slot[part],
            };
        }
        *slot = serde_json::from_str(v).unwrap_or(serde_json::Value::String(v.into()));
    }
    for s in 0..seeds {
        let mut cfg: SimConfig = serde_json::from_value(base.clone()).unwrap();
        cfg.seed += s;
        let ds = generate(&cfg).unwrap();
        let dm = distance_matrix(&ds.firms, DistanceKernel::Haversine).unwrap();
        println!("seed {}", cfg.seed);
        for (k, tech) in ds.panel.techs().iter().enumerate() {
            let (d, y, _) = decay_sample(&ds.panel, &dm, k, ds.panel.first_year() + 1..=ds.panel.last_year()).unwrap();
            let curve = bin_adoption_by_distance(&d, &y, DEFAULT_BIN_WIDTH_KM).unwrap();
            let alt = fit_alternatives(&curve, 0.05).unwrap();
            let rates: Vec<f64> = ds.panel.years().map(|yr| ds.panel.rate(k, yr)).collect();
            let l2: Vec<f64> = ds.log.lambda2_trace.iter().filter(|p| &p.tech == tech).map(|p| p.lambda2).collect();
            let (growth, c) = if l2.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                (100.0 * (l2[l2.len() - 1] / l2[0] - 1.0), corr(&l2, &rates))
            };
            let mono = l2.windows(2).all(|w| w[1] >= w[0]);
            println!(
                "  {:<8} rate {:.2}->{:.2} ({:.2},{:.2}) kappa {:.4} d* {:5.1} r2 {:.3}/{:.3}/{:.3} | l2 {:4.0}% corr {:.3} mono {}",
                &tech[..tech.len().min(8)], rates[0], rates[rates.len() - 1], rates[5], rates[10], alt.exponential.kappa, alt.exponential.d_star.unwrap(),
                alt.exponential.r_squared, alt.power.r_squared, alt.linear.r_squared, growth, c, mono
            );
        }
    }
}
