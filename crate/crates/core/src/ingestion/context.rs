use chrono::{Datelike, NaiveDateTime, Timelike};

pub const DAY_DIVISOR: f64 = 6.0;
pub const TIME_DIVISOR: f64 = 47.0;
pub const TIME_BUCKET_MINUTES: u32 = 30;

/// Day-of-week and half-hour bucket, each scaled into `[0, 1]`.
///
/// Sunday is day 0 and Saturday day 6; the day is cut into 48 buckets of
/// 30 minutes numbered 0 to 47.
pub fn context_scalars(timestamp: NaiveDateTime) -> (f64, f64) {
    let day = timestamp.weekday().num_days_from_sunday() as f64;
    let minutes = timestamp.hour() * 60 + timestamp.minute();
    let bucket = (minutes / TIME_BUCKET_MINUTES) as f64;
    (day / DAY_DIVISOR, bucket / TIME_DIVISOR)
}
