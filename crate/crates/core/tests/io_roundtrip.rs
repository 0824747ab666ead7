use photonstat::correlator::{CorrelationHistogram, HistogramMeta, Stage};
use photonstat::io::*;
use photonstat::sim::{SeriesPoint, TimestampStream};
use proptest::prelude::*;

fn stream() -> impl Strategy<Value = TimestampStream> {
    (1u64..u64::MAX / 2, proptest::collection::vec(any::<u64>(), 0..300)).prop_map(|(duration, raw)| {
        let mut ts: Vec<u64> = raw.into_iter().map(|t| t % (duration + 1)).collect();
        ts.sort_unstable();
        TimestampStream::new(ts, duration, "ch").unwrap()
    })
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![any::<f64>().prop_filter("finite", |v| v.is_finite()), -1e3f64..1e3]
}

fn histogram() -> impl Strategy<Value = CorrelationHistogram> {
    let stage = prop_oneof![Just(Stage::Raw), Just(Stage::Normalized), Just(Stage::BackgroundCorrected)];
    (0usize..200, 1e-3f64..10.0, stage, proptest::option::of(0.01f64..1.0), 1e-9f64..1.0).prop_flat_map(
        |(half, bin, stage, rho, scale)| {
            let n = 2 * half + 1;
            (proptest::collection::vec(0u64..1_000_000, n), proptest::collection::vec(finite(), n)).prop_map(
                move |(counts, values)| {
                    let centers = (0..n).map(|k| (k as f64 - half as f64) * bin).collect();
                    let meta = HistogramMeta { n1: 1.5e5, n2: 2.5e5, duration: 3.25, bin_width: bin, rho, scale };
                    CorrelationHistogram::from_parts(centers, counts, values, stage, meta).unwrap()
                },
            )
        },
    )
}

fn series() -> impl Strategy<Value = Vec<SeriesPoint>> {
    proptest::collection::vec(
        (finite(), finite(), 1e-300f64..1e300).prop_map(|(x, y, sigma)| SeriesPoint { x, y, sigma }),
        0..100,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn binary_timestamps_round_trip(s in stream()) {
        let mut buf = Vec::new();
        write_timestamps(&mut buf, &s).unwrap();
        prop_assert_eq!(buf.len(), HEADER_LEN + 8 * s.len());
        prop_assert_eq!(read_timestamps(buf.as_slice(), "ch").unwrap(), s);
    }

    // The header carries no record count: a cut on a record boundary reads
    // back as a prefix, anything else is an error.
    #[test]
    fn truncation_yields_prefix_or_error(s in stream(), cut in any::<prop::sample::Index>()) {
        let mut buf = Vec::new();
        write_timestamps(&mut buf, &s).unwrap();
        let len = cut.index(buf.len());
        match read_timestamps(&buf[..len], "ch") {
            Ok(back) => {
                prop_assert!(len >= HEADER_LEN && (len - HEADER_LEN).is_multiple_of(8));
                prop_assert_eq!(back.timestamps(), &s.timestamps()[..(len - HEADER_LEN) / 8]);
            }
            Err(FormatError::TruncatedHeader) => prop_assert!(len < HEADER_LEN),
            Err(FormatError::TruncatedRecord(_)) => prop_assert!(!(len - HEADER_LEN).is_multiple_of(8)),
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn csv_timestamps_round_trip(s in stream()) {
        let mut buf = Vec::new();
        write_timestamps_csv(&mut buf, &s).unwrap();
        prop_assert_eq!(read_timestamps_csv(buf.as_slice(), "ch").unwrap(), s);
    }

    #[test]
    fn histogram_round_trip(h in histogram()) {
        let mut buf = Vec::new();
        write_histogram(&mut buf, &h).unwrap();
        prop_assert_eq!(read_histogram(buf.as_slice()).unwrap(), h);
    }

    #[test]
    fn series_round_trip(points in series(), note in "[a-z]{1,12}") {
        let mut buf = Vec::new();
        write_series(&mut buf, &points, &[("note", note.clone())]).unwrap();
        let (back, meta) = read_series(buf.as_slice()).unwrap();
        prop_assert_eq!(back, points);
        prop_assert_eq!(meta.get("note"), Some(&note));
    }
}
