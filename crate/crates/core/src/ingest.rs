//! Household-electricity ingestion: parse the UCI minute-resolution file,
//! repair gaps onto a uniform minute grid, keep a deterministic 40% subset
//! of timesteps, and reduce each kept row to a single randomly drawn
//! feature plus indicators, time/date encodings and the duration.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{ColumnRole, ColumnSpec, SeriesFrame};
use crate::scalar::Scalar;

pub const FEATURE_NAMES: [&str; 7] = [
    "global_active_power",
    "global_reactive_power",
    "voltage",
    "global_intensity",
    "sub_metering_1",
    "sub_metering_2",
    "sub_metering_3",
];

/// Kept timestep offsets within each 25-minute cycle; successive kept
/// indices differ by the duration cycle (1, 2, 3, 7, 2, 2, 4, 1, 2, 1).
pub const KEPT_OFFSETS: [u64; 10] = [0, 1, 3, 6, 13, 15, 17, 21, 22, 24];
pub const DURATION_CYCLE: [u64; 10] = [1, 2, 3, 7, 2, 2, 4, 1, 2, 1];

/// Sampling weights assigned to the seven features, before permutation.
pub fn feature_weight_ladder() -> [f64; 7] {
    let mut w = [0.0; 7];
    for (i, v) in w.iter_mut().enumerate() {
        *v = 1.5f64.powi(i as i32);
    }
    w
}

/// One minute-grid observation.
#[derive(Clone, Copy, Debug)]
pub struct ElectricityRow {
    /// Minutes since the first kept observation.
    pub minutes: u64,
    pub features: [f64; 7],
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct ParseStats {
    pub lines_read: usize,
    pub rows_out: usize,
    /// `?` fields replaced by the previous row's value.
    pub repaired_fields: usize,
    /// Rows inserted to fill calendar gaps.
    pub gap_filled_rows: usize,
    pub skipped_lines: usize,
    /// Leading rows dropped before the first fully valid observation.
    pub dropped_leading: usize,
}

pub struct ParsedElectricity {
    pub rows: Vec<ElectricityRow>,
    pub stats: ParseStats,
    /// Wall-clock datetime of `rows[0]`, for time/date encodings.
    pub start: NaiveDateTime,
}

/// Parses the semicolon-separated UCI format (`Date;Time;7 numeric fields`,
/// missing values as `?`). Missing fields are forward-filled, calendar gaps
/// are filled onto a uniform minute grid, and malformed lines are skipped
/// with their line numbers until the error budget runs out.
pub fn parse_uci(path: &Path, error_budget: usize) -> Result<ParsedElectricity> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut stats = ParseStats::default();
    let mut rows: Vec<ElectricityRow> = Vec::new();
    let mut start: Option<NaiveDateTime> = None;
    let mut prev_dt: Option<NaiveDateTime> = None;
    let mut last_features: Option<[f64; 7]> = None;
    let mut skipped: Vec<usize> = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        stats.lines_read += 1;
        if lineno == 0 && line.starts_with("Date;") {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line) {
            Ok((dt, raw)) => {
                if let Some(prev) = prev_dt {
                    if dt <= prev {
                        skipped.push(lineno + 1);
                        stats.skipped_lines += 1;
                        check_budget(&skipped, error_budget)?;
                        continue;
                    }
                }
                let mut features = [0.0; 7];
                let mut repaired = 0usize;
                let mut complete = true;
                for i in 0..7 {
                    match raw[i] {
                        Some(v) => features[i] = v,
                        None => match last_features {
                            Some(prev) => {
                                features[i] = prev[i];
                                repaired += 1;
                            }
                            None => complete = false,
                        },
                    }
                }
                if !complete {
                    // No earlier value to fill from yet.
                    stats.dropped_leading += 1;
                    continue;
                }
                stats.repaired_fields += repaired;

                if start.is_none() {
                    start = Some(dt);
                }
                if let Some(prev) = prev_dt {
                    let gap = (dt - prev).num_minutes() as u64;
                    let base_minutes = rows.last().map(|r| r.minutes).unwrap_or(0);
                    let fill = last_features.unwrap_or(features);
                    for g in 1..gap {
                        rows.push(ElectricityRow {
                            minutes: base_minutes + g,
                            features: fill,
                        });
                        stats.gap_filled_rows += 1;
                    }
                }
                let minutes = (dt - start.unwrap()).num_minutes() as u64;
                rows.push(ElectricityRow { minutes, features });
                prev_dt = Some(dt);
                last_features = Some(features);
            }
            Err(msg) => {
                skipped.push(lineno + 1);
                stats.skipped_lines += 1;
                if stats.skipped_lines <= 5 {
                    eprintln!("ingest: skipping line {}: {}", lineno + 1, msg);
                }
                check_budget(&skipped, error_budget)?;
            }
        }
    }
    let start = start.ok_or(Error::Empty("no valid rows in electricity file"))?;
    stats.rows_out = rows.len();
    Ok(ParsedElectricity { rows, stats, start })
}

fn check_budget(skipped: &[usize], budget: usize) -> Result<()> {
    if skipped.len() > budget {
        return Err(Error::Parse {
            line: *skipped.last().unwrap(),
            msg: format!("{} malformed lines exceed budget {}", skipped.len(), budget),
        });
    }
    Ok(())
}

fn parse_line(line: &str) -> std::result::Result<(NaiveDateTime, [Option<f64>; 7]), String> {
    let fields: Vec<&str> = line.split(';').collect();
    if fields.len() != 9 {
        return Err(format!("{} fields, expected 9", fields.len()));
    }
    let date = NaiveDate::parse_from_str(fields[0], "%d/%m/%Y")
        .map_err(|e| format!("bad date {:?}: {}", fields[0], e))?;
    let time = NaiveTime::parse_from_str(fields[1], "%H:%M:%S")
        .map_err(|e| format!("bad time {:?}: {}", fields[1], e))?;
    let mut values = [None; 7];
    for i in 0..7 {
        let f = fields[i + 2].trim();
        if f == "?" || f.is_empty() {
            continue;
        }
        values[i] = Some(
            f.parse::<f64>()
                .map_err(|e| format!("bad number {:?}: {}", f, e))?,
        );
    }
    Ok((NaiveDateTime::new(date, time), values))
}

/// Indices kept by the deterministic schedule: minutes with
/// `minute mod 25` in [`KEPT_OFFSETS`].
pub fn subsample_schedule(rows: &[ElectricityRow]) -> Vec<usize> {
    rows.iter()
        .enumerate()
        .filter(|(_, r)| KEPT_OFFSETS.contains(&(r.minutes % 25)))
        .map(|(i, _)| i)
        .collect()
}

/// One asynchronized observation.
#[derive(Clone, Debug)]
pub struct AsyncElectricityRow {
    /// Minute of day scaled to [0, 1).
    pub time_frac: f64,
    /// Day of week scaled to [0, 1).
    pub date_frac: f64,
    /// Drawn feature index, 0..7.
    pub feature: usize,
    pub value: f64,
    /// Minutes since the previous kept row (0 on the first).
    pub duration: u64,
    /// The full raw feature vector of this row, kept as the regression
    /// target for the preceding window.
    pub raw_features: [f64; 7],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IngestReport {
    pub seed: u64,
    /// `weight_exponents[f]` is the exponent e such that feature f samples
    /// with weight 1.5^e.
    pub weight_exponents: [usize; 7],
    pub kept_rows: usize,
    pub total_rows: usize,
    pub stats: ParseStats,
}

/// Draws the per-feature weight permutation once from the seed, then samples
/// one feature per kept row with the (fixed) normalized weights.
pub fn sample_features(
    parsed: &ParsedElectricity,
    kept: &[usize],
    rng: &mut ChaCha8Rng,
) -> (Vec<AsyncElectricityRow>, [usize; 7]) {
    let mut exponents: [usize; 7] = [0, 1, 2, 3, 4, 5, 6];
    exponents.shuffle(rng);
    let ladder = feature_weight_ladder();
    let weights: Vec<f64> = exponents.iter().map(|&e| ladder[e]).collect();
    let total: f64 = weights.iter().sum();
    let mut cdf = Vec::with_capacity(7);
    let mut acc = 0.0;
    for w in &weights {
        acc += w / total;
        cdf.push(acc);
    }

    let mut out = Vec::with_capacity(kept.len());
    let mut prev_minutes: Option<u64> = None;
    for &i in kept {
        let row = &parsed.rows[i];
        let u: f64 = rng.gen();
        let feature = cdf.iter().position(|&c| u < c).unwrap_or(6);
        let dt = parsed.start + Duration::minutes(row.minutes as i64);
        let minute_of_day = dt.time().num_seconds_from_midnight() / 60;
        let weekday = dt.date().weekday().num_days_from_monday();
        out.push(AsyncElectricityRow {
            time_frac: minute_of_day as f64 / 1440.0,
            date_frac: weekday as f64 / 7.0,
            feature,
            value: row.features[feature],
            duration: prev_minutes.map(|p| row.minutes - p).unwrap_or(0),
            raw_features: row.features,
        });
        prev_minutes = Some(row.minutes);
    }
    (out, exponents)
}

/// Frame layout: time, date, 7 indicators, value, duration as model inputs,
/// plus the 7 raw features as target-only columns.
pub fn to_frame<S: Scalar>(rows: &[AsyncElectricityRow]) -> Result<SeriesFrame<S>> {
    let mut columns = vec![
        ColumnSpec {
            role: ColumnRole::Time,
            name: "minute_of_day".into(),
        },
        ColumnSpec {
            role: ColumnRole::Date,
            name: "day_of_week".into(),
        },
    ];
    for name in FEATURE_NAMES {
        columns.push(ColumnSpec {
            role: ColumnRole::Indicator,
            name: format!("ind_{name}"),
        });
    }
    columns.push(ColumnSpec {
        role: ColumnRole::SourceValue,
        name: "value".into(),
    });
    columns.push(ColumnSpec {
        role: ColumnRole::Duration,
        name: "duration".into(),
    });
    for name in FEATURE_NAMES {
        columns.push(ColumnSpec {
            role: ColumnRole::Target,
            name: name.into(),
        });
    }

    let width = columns.len();
    let mut values = Vec::with_capacity(rows.len() * width);
    for r in rows {
        values.push(S::c(r.time_frac));
        values.push(S::c(r.date_frac));
        for f in 0..7 {
            values.push(if f == r.feature { S::one() } else { S::zero() });
        }
        values.push(S::c(r.value));
        values.push(S::c(r.duration as f64));
        for f in 0..7 {
            values.push(S::c(r.raw_features[f]));
        }
    }
    SeriesFrame::new("electricity-async", columns, values)
}

/// Full pipeline: parse, subsample, asynchronize, frame.
pub fn ingest<S: Scalar>(
    path: &Path,
    seed: u64,
    error_budget: usize,
) -> Result<(SeriesFrame<S>, IngestReport)> {
    use rand::SeedableRng;
    let parsed = parse_uci(path, error_budget)?;
    let kept = subsample_schedule(&parsed.rows);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (rows, exponents) = sample_features(&parsed, &kept, &mut rng);
    let frame = to_frame(&rows)?;
    Ok((
        frame,
        IngestReport {
            seed,
            weight_exponents: exponents,
            kept_rows: kept.len(),
            total_rows: parsed.rows.len(),
            stats: parsed.stats,
        },
    ))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::SeedableRng;
    use std::io::Write;

    fn write_fixture(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            f,
            "Date;Time;Global_active_power;Global_reactive_power;Voltage;Global_intensity;Sub_metering_1;Sub_metering_2;Sub_metering_3"
        )
        .unwrap();
        for l in lines {
            writeln!(f, "{}", l).unwrap();
        }
        f
    }

    /// Synthetic minute-grid fixture starting at the UCI file's first stamp.
    pub(crate) fn synthetic_fixture(n: usize) -> tempfile::NamedTempFile {
        let start = NaiveDate::from_ymd_opt(2006, 12, 16)
            .unwrap()
            .and_hms_opt(17, 24, 0)
            .unwrap();
        let mut lines = Vec::with_capacity(n);
        for i in 0..n {
            let dt = start + Duration::minutes(i as i64);
            lines.push(format!(
                "{};{:02}:{:02}:{:02};{:.3};{:.3};{:.2};{:.1};{:.1};{:.1};{:.1}",
                dt.format("%d/%m/%Y"),
                dt.hour(),
                dt.minute(),
                dt.second(),
                1.0 + (i % 13) as f64 * 0.1,
                0.1 + (i % 7) as f64 * 0.01,
                240.0 + (i % 5) as f64,
                4.0 + (i % 3) as f64,
                (i % 2) as f64,
                (i % 4) as f64,
                (i % 6) as f64,
            ));
        }
        let refs: Vec<&str> = lines.iter().map(|s| s.as_str()).collect();
        write_fixture(&refs)
    }

    #[test]
    fn three_line_fixture_has_minute_offsets() {
        let f = write_fixture(&[
            "16/12/2006;17:24:00;4.216;0.418;234.840;18.400;0.000;1.000;17.000",
            "16/12/2006;17:25:00;5.360;0.436;233.630;23.000;0.000;1.000;16.000",
            "16/12/2006;17:26:00;5.374;0.498;233.290;23.000;0.000;2.000;17.000",
        ]);
        let parsed = parse_uci(f.path(), 10).unwrap();
        assert_eq!(parsed.rows.len(), 3);
        assert_eq!(
            parsed.rows.iter().map(|r| r.minutes).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
        assert_eq!(parsed.rows[1].features[0], 5.360);
    }

    #[test]
    fn question_mark_is_forward_filled() {
        let f = write_fixture(&[
            "16/12/2006;17:24:00;4.216;0.418;234.840;18.400;0.000;1.000;17.000",
            "16/12/2006;17:25:00;?;0.436;233.630;23.000;0.000;1.000;16.000",
        ]);
        let parsed = parse_uci(f.path(), 10).unwrap();
        assert_eq!(parsed.rows[1].features[0], 4.216);
        assert_eq!(parsed.stats.repaired_fields, 1);
    }

    #[test]
    fn leading_rows_without_values_are_dropped() {
        let f = write_fixture(&[
            "16/12/2006;17:24:00;?;?;?;?;?;?;?",
            "16/12/2006;17:25:00;1.0;0.1;240.0;4.0;0.0;0.0;0.0",
        ]);
        let parsed = parse_uci(f.path(), 10).unwrap();
        assert_eq!(parsed.rows.len(), 1);
        assert_eq!(parsed.stats.dropped_leading, 1);
        assert_eq!(parsed.rows[0].minutes, 0);
    }

    #[test]
    fn calendar_gaps_fill_to_minute_grid() {
        let f = write_fixture(&[
            "16/12/2006;17:24:00;1.0;0.1;240.0;4.0;0.0;0.0;0.0",
            "16/12/2006;17:28:00;2.0;0.2;241.0;5.0;1.0;1.0;1.0",
        ]);
        let parsed = parse_uci(f.path(), 10).unwrap();
        assert_eq!(parsed.rows.len(), 5);
        assert_eq!(parsed.stats.gap_filled_rows, 3);
        // filled rows carry the previous row's features
        assert_eq!(parsed.rows[2].features[0], 1.0);
        assert_eq!(parsed.rows[4].features[0], 2.0);
        assert_eq!(
            parsed.rows.iter().map(|r| r.minutes).collect::<Vec<_>>(),
            vec![0, 1, 2, 3, 4]
        );
    }

    #[test]
    fn malformed_lines_skip_until_budget() {
        let f = write_fixture(&[
            "16/12/2006;17:24:00;1.0;0.1;240.0;4.0;0.0;0.0;0.0",
            "not;a;row",
            "16/12/2006;17:25:00;1.0;0.1;240.0;4.0;0.0;0.0;0.0",
        ]);
        let parsed = parse_uci(f.path(), 1).unwrap();
        assert_eq!(parsed.rows.len(), 2);
        assert_eq!(parsed.stats.skipped_lines, 1);

        let g = write_fixture(&["garbage", "more garbage"]);
        assert!(parse_uci(g.path(), 1).is_err());
    }

    #[test]
    fn schedule_keeps_exactly_the_stated_offsets() {
        let f = synthetic_fixture(25);
        let parsed = parse_uci(f.path(), 0).unwrap();
        let kept = subsample_schedule(&parsed.rows);
        assert_eq!(kept, vec![0, 1, 3, 6, 13, 15, 17, 21, 22, 24]);
    }

    #[test]
    fn duration_cycle_sums_to_twenty_five() {
        assert_eq!(DURATION_CYCLE.iter().sum::<u64>(), 25);
        // and matches the kept-offset differences
        for i in 1..KEPT_OFFSETS.len() {
            assert_eq!(DURATION_CYCLE[i - 1], KEPT_OFFSETS[i] - KEPT_OFFSETS[i - 1]);
        }
        assert_eq!(DURATION_CYCLE[9], 25 - KEPT_OFFSETS[9]);
    }

    #[test]
    fn kept_fraction_is_forty_percent() {
        let f = synthetic_fixture(5000);
        let parsed = parse_uci(f.path(), 0).unwrap();
        let kept = subsample_schedule(&parsed.rows);
        assert_eq!(kept.len(), 2000);
    }

    #[test]
    fn sampled_rows_have_one_indicator_and_cycle_durations() {
        let f = synthetic_fixture(500);
        let parsed = parse_uci(f.path(), 0).unwrap();
        let kept = subsample_schedule(&parsed.rows);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (rows, _) = sample_features(&parsed, &kept, &mut rng);
        assert_eq!(rows.len(), kept.len());
        assert_eq!(rows[0].duration, 0);
        for (i, r) in rows.iter().enumerate().skip(1) {
            assert_eq!(r.duration, DURATION_CYCLE[(i - 1) % 10]);
            assert!(r.feature < 7);
            assert_eq!(r.value, r.raw_features[r.feature]);
        }
    }

    #[test]
    fn same_seed_reproduces_assignment() {
        let f = synthetic_fixture(300);
        let parsed = parse_uci(f.path(), 0).unwrap();
        let kept = subsample_schedule(&parsed.rows);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample_features(&parsed, &kept, &mut rng)
        };
        let (a, ea) = run(1);
        let (b, eb) = run(1);
        let (_, ec) = run(2);
        assert_eq!(ea, eb);
        assert!(a.iter().zip(&b).all(|(x, y)| x.feature == y.feature));
        assert_ne!(ea, ec);
    }

    #[test]
    fn frame_layout_has_eighteen_columns() {
        let f = synthetic_fixture(200);
        let (frame, report) = ingest::<f64>(f.path(), 3, 0).unwrap();
        assert_eq!(frame.n_cols(), 18);
        assert_eq!(frame.n_rows(), report.kept_rows);
        assert_eq!(frame.columns_with_role(ColumnRole::Indicator).len(), 7);
        assert_eq!(frame.columns_with_role(ColumnRole::Target).len(), 7);
        for row in 0..frame.n_rows() {
            let ones: usize = (2..9).filter(|&c| frame.get(row, c) == 1.0).count();
            assert_eq!(ones, 1);
        }
    }

    /// Chi-square homogeneity of per-feature frequencies between the first
    /// and second half; 6 degrees of freedom, not rejected at p = 0.01.
    #[test]
    fn feature_frequencies_constant_over_time() {
        let f = synthetic_fixture(20_000);
        let parsed = parse_uci(f.path(), 0).unwrap();
        let kept = subsample_schedule(&parsed.rows);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (rows, _) = sample_features(&parsed, &kept, &mut rng);
        let half = rows.len() / 2;
        let counts = |slice: &[AsyncElectricityRow]| {
            let mut c = [0f64; 7];
            for r in slice {
                c[r.feature] += 1.0;
            }
            c
        };
        let a = counts(&rows[..half]);
        let b = counts(&rows[half..]);
        let mut chi2 = 0.0;
        for f in 0..7 {
            let total = a[f] + b[f];
            let ea = total * half as f64 / rows.len() as f64;
            let eb = total - ea;
            chi2 += (a[f] - ea).powi(2) / ea + (b[f] - eb).powi(2) / eb;
        }
        // chi-square critical value, 6 dof, p = 0.01
        assert!(chi2 < 16.812, "chi2 {}", chi2);
    }
}
