/// Half-open time interval `[start, end)` in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn duration(&self) -> f64 {
        (self.end - self.start).max(0.0)
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t < self.end
    }
}

/// Sorts, clips to `[0, limit]`, drops empty intervals, and merges
/// intervals that overlap or touch.
pub fn normalize(mut intervals: Vec<Interval>, limit: f64) -> Vec<Interval> {
    for iv in &mut intervals {
        iv.start = iv.start.max(0.0);
        iv.end = iv.end.min(limit);
    }
    intervals.retain(|iv| iv.end > iv.start);
    intervals.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));
    let mut merged: Vec<Interval> = Vec::with_capacity(intervals.len());
    for iv in intervals {
        match merged.last_mut() {
            Some(last) if iv.start <= last.end => last.end = last.end.max(iv.end),
            _ => merged.push(iv),
        }
    }
    merged
}

pub fn total_duration(intervals: &[Interval]) -> f64 {
    intervals.iter().map(Interval::duration).sum()
}

/// Length of the intersection of two normalized interval lists.
pub fn intersection_duration(a: &[Interval], b: &[Interval]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let lo = a[i].start.max(b[j].start);
        let hi = a[i].end.min(b[j].end);
        if hi > lo {
            total += hi - lo;
        }
        if a[i].end < b[j].end {
            i += 1;
        } else {
            j += 1;
        }
    }
    total
}

/// `[0, limit]` minus the union of `holes`, both normalized.
pub fn complement_within(holes: &[Interval], limit: f64) -> Vec<Interval> {
    let mut out = Vec::new();
    let mut cursor = 0.0;
    for h in holes {
        if h.start > cursor {
            out.push(Interval::new(cursor, h.start));
        }
        cursor = cursor.max(h.end);
    }
    if limit > cursor {
        out.push(Interval::new(cursor, limit));
    }
    out
}

/// Whether `t` lies in some interval of a normalized list.
pub fn covers(intervals: &[Interval], t: f64) -> bool {
    let idx = intervals.partition_point(|iv| iv.end <= t);
    intervals.get(idx).is_some_and(|iv| iv.contains(t))
}
