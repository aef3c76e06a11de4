use eit_core::cli_io::{
    frame_from_bytes, frame_to_bytes, grid_to_pgm, split_assignment, ManifestRow, Split, MASK_SHADE,
};
use eit_core::fem::{add_noise, MeasurementFrame, Protocol};
use eit_core::gridfield::{grid_from_bytes, grid_to_bytes, GridField, GridSource, GridSpec};
use eit_core::mesh::build_disk_mesh;
use eit_core::metrics::{cc, rie, ssim};
use eit_core::phantom::{element_sigma, rasterize_sigma, sample_phantom, Category};
use eit_core::pinn::{top_t_indices, InverseConfig};
use eit_core::pipeline::{equispaced, HarmonicExtension};
use proptest::prelude::*;

fn field(n: usize, seed: u64, source: GridSource) -> GridField {
    let spec = GridSpec::new(n);
    // Cheap deterministic structure so fields are never constant.
    GridField::from_fn(&spec, source, (seed % 7) as u32, |p| {
        let s = seed as f64 * 0.37;
        (3.0 * p[0] + s).sin() * (2.0 * p[1] - s).cos() + 0.1 * p[0]
    })
}

fn category() -> impl Strategy<Value = Category> {
    prop::sample::select(Category::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn grid_bytes_round_trip(n in 4usize..48, seed in 0u64..1000, flag in 0u8..3) {
        let source = GridSource::from_flag(flag).unwrap();
        let g = field(n, seed, source);
        let back = grid_from_bytes(&grid_to_bytes(&g)).unwrap();
        prop_assert_eq!(&back.spec, &g.spec);
        prop_assert_eq!(back.source, g.source);
        prop_assert_eq!(back.excitation_id, g.excitation_id);
        for i in 0..g.spec.len() {
            if g.spec.in_mask(i) {
                prop_assert_eq!(back.values[i], g.values[i] as f32 as f64);
            } else {
                prop_assert!(back.values[i].is_nan());
            }
        }
        prop_assert_eq!(grid_to_bytes(&back), grid_to_bytes(&g));
    }

    #[test]
    fn truncated_grid_bytes_are_rejected(n in 4usize..24, cut in 0usize..100) {
        let bytes = grid_to_bytes(&field(n, 1, GridSource::Fem));
        let cut = cut.min(bytes.len() - 1);
        prop_assert!(grid_from_bytes(&bytes[..cut]).is_err());
    }

    #[test]
    fn frame_bytes_round_trip(values in prop::collection::vec(-1e3f64..1e3, 208), snr in prop::option::of(10.0f64..80.0)) {
        let f = MeasurementFrame { protocol: Protocol::AdjacentSkip, values, snr_db: snr };
        prop_assert_eq!(frame_from_bytes(&frame_to_bytes(&f)).unwrap(), f);
    }

    #[test]
    fn metric_identities(a in 0u64..500, b in 0u64..500) {
        let (x, y) = (field(40, a, GridSource::Sigma), field(40, b, GridSource::Sigma));
        prop_assert!((cc(&x, &y).unwrap() - cc(&y, &x).unwrap()).abs() < 1e-12);
        prop_assert!(ssim(&x, &y).unwrap() <= 1.0 + 1e-12);
        prop_assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!(rie(&x, &x).unwrap() == 0.0);
    }

    #[test]
    fn ssim_invariant_under_shared_rescale(a in 0u64..500, b in 0u64..500, scale in 0.1f64..10.0) {
        let (x, y) = (field(32, a, GridSource::Sigma), field(32, b, GridSource::Sigma));
        let scaled = |g: &GridField| {
            let mut g = g.clone();
            g.values.iter_mut().for_each(|v| *v *= scale);
            g
        };
        prop_assert!((ssim(&scaled(&x), &scaled(&y)).unwrap() - ssim(&x, &y).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn cc_is_affine_invariant(a in 0u64..500, scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
        let x = field(32, a, GridSource::Sigma);
        let mut y = x.clone();
        y.values.iter_mut().for_each(|v| *v = scale * *v + shift);
        prop_assert!((cc(&x, &y).unwrap() - 1.0).abs() < 1e-10);
        y.values.iter_mut().for_each(|v| *v = -*v);
        prop_assert!((cc(&x, &y).unwrap() + 1.0).abs() < 1e-10);
    }

    #[test]
    fn top_t_dominates_the_rest(values in prop::collection::vec(-100.0f64..100.0, 1..200), t in 1usize..250) {
        let idx = top_t_indices(&values, t);
        prop_assert_eq!(idx.len(), t.min(values.len()));
        let chosen: std::collections::HashSet<usize> = idx.iter().copied().collect();
        let min_in = idx.iter().map(|&i| values[i].abs()).fold(f64::INFINITY, f64::min);
        let max_out = (0..values.len())
            .filter(|i| !chosen.contains(i))
            .map(|i| values[i].abs())
            .fold(0.0f64, f64::max);
        prop_assert!(min_in >= max_out);
    }

    #[test]
    fn rasterized_truth_takes_only_phantom_values(seed in 0u64..10_000, cat in category()) {
        let p = sample_phantom(seed, cat).unwrap();
        let allowed = p.value_set();
        let g = rasterize_sigma(&p, &GridSpec::new(64));
        for v in g.masked_values() {
            prop_assert!(allowed.contains(&v), "{} not in {:?}", v, allowed);
        }
    }

    #[test]
    fn noise_is_seeded_and_scaled(values in prop::collection::vec(-10.0f64..10.0, 16..64), seed in 0u64..100, snr in 10.0f64..80.0) {
        prop_assume!(values.iter().any(|v| v.abs() > 1e-3));
        let a = add_noise(&values, snr, seed);
        prop_assert_eq!(&a, &add_noise(&values, snr, seed));
        let quieter = add_noise(&values, snr + 20.0, seed);
        let dist = |v: &[f64]| v.iter().zip(&values).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        prop_assert!(dist(&quieter) < dist(&a));
    }

    #[test]
    fn split_counts_follow_ratios(n in 1usize..2000, seed in 0u64..1000) {
        let s = split_assignment(n, seed);
        prop_assert_eq!(s.len(), n);
        let count = |k: Split| s.iter().filter(|&&x| x == k).count();
        let train = (0.8 * n as f64).round() as usize;
        let val = (0.1 * n as f64).round() as usize;
        prop_assert_eq!(count(Split::Train), train);
        prop_assert_eq!(count(Split::Val), val);
        prop_assert_eq!(count(Split::Test), n - train - val);
    }

    #[test]
    fn manifest_rows_round_trip(seed in any::<u64>(), noise in any::<u64>(), snr in 40.0f64..60.0, cat in category(), k in 0usize..3) {
        let row = ManifestRow {
            record: format!("r{:05}", seed % 100_000),
            category: cat,
            phantom_seed: seed,
            noise_seed: noise,
            snr_db: snr,
            split: [Split::Train, Split::Val, Split::Test][k],
            config_hash: "0123456789abcdef".into(),
        };
        prop_assert_eq!(ManifestRow::parse(&row.csv()).unwrap(), row);
    }

    #[test]
    fn config_text_round_trips(alpha in 0.0f64..1.0, top_t in 1usize..100, seed in any::<u64>(), iterations in 0usize..20_000) {
        let c = InverseConfig { alpha, top_t, seed, iterations, ..InverseConfig::default() };
        prop_assert_eq!(InverseConfig::from_kv(&c.to_kv()).unwrap(), c);
    }

    #[test]
    fn harmonic_extension_interpolates(values in prop::collection::vec(-1.0f64..1.0, 16), offset in -1.0f64..1.0) {
        let angles = equispaced(16, offset);
        let mean = values.iter().sum::<f64>() / 16.0;
        let ext = HarmonicExtension::interpolating(&angles, &values);
        for (&t, &v) in angles.iter().zip(&values) {
            prop_assert!((ext.eval([t.cos(), t.sin()]) - (v - mean)).abs() < 1e-12);
        }
    }

    #[test]
    fn pgm_range_and_mask(seed in 0u64..200, n in 8usize..40) {
        let g = field(n, seed, GridSource::Sigma);
        let (img, side) = grid_to_pgm(&g);
        let (lo, hi) = g.range();
        prop_assert_eq!((side.min, side.max), (lo, hi));
        let header = format!("P5\n{n} {n}\n255\n");
        prop_assert!(img.starts_with(header.as_bytes()));
        let pixels = &img[header.len()..];
        prop_assert_eq!(pixels.len(), n * n);
        let masked = pixels.iter().filter(|&&p| p == MASK_SHADE).count();
        prop_assert_eq!(masked, n * n - g.spec.n_mask());
    }
}

#[test]
fn element_truth_takes_only_phantom_values() {
    let mesh = build_disk_mesh(2);
    for (seed, cat) in (0..20).zip(Category::ALL.iter().cycle()) {
        let p = sample_phantom(seed, *cat).unwrap();
        let allowed = p.value_set();
        assert!(element_sigma(&p, &mesh).iter().all(|v| allowed.contains(v)));
    }
}
