//! Process-wide strictly increasing wall clock.
//!
//! Audit histories and listings are ordered by timestamp, so two events in
//! the same microsecond must still compare unequal.

use std::sync::atomic::{AtomicI64, Ordering};

use chrono::{DateTime, Utc};

static LAST_MICROS: AtomicI64 = AtomicI64::new(i64::MIN);

pub fn now() -> DateTime<Utc> {
    let wall = Utc::now().timestamp_micros();
    let mut prev = LAST_MICROS.load(Ordering::Relaxed);
    loop {
        let next = wall.max(prev.saturating_add(1));
        match LAST_MICROS.compare_exchange_weak(prev, next, Ordering::Relaxed, Ordering::Relaxed) {
            Ok(_) => return DateTime::from_timestamp_micros(next).expect("timestamp in range"),
            Err(seen) => prev = seen,
        }
    }
}
