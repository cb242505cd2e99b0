//! Published per-class rows and the means they report.

use uda_i2i::data::ClassSet;
use uda_i2i::eval::{gap_report, miou};

/// GTA5 → Cityscapes, 19 classes, row "Ours"; reported mean 50.1.
pub const GTA_OURS: [f64; 19] = [
    94.4, 65.3, 85.9, 39.0, 22.2, 35.4, 39.1, 37.3, 86.7, 42.3, 88.1, 62.7, 36.2, 87.6, 33.8, 45.0, 0.0, 26.5, 24.2,
];

/// SYNTHIA → Cityscapes, 16 classes, row "Ours"; reported 42.7 over all
/// sixteen and 49.8 without wall, fence and pole.
pub const SYNTHIA_OURS: [f64; 16] = [
    94.8, 67.2, 81.9, 6.1, 0.1, 29.6, 0.1, 19.7, 82.2, 81.1, 50.2, 17.0, 84.6, 30.8, 12.4, 25.1,
];
pub const SYNTHIA_STARRED: [usize; 3] = [3, 4, 5];

/// Upper bound, source-only and method scores of the gap table.
pub const GAP: (f64, f64, f64) = (68.0, 39.6, 59.0);

/// One reproduced number against its published value.
#[derive(Clone, Debug)]
pub struct Reproduced {
    pub what: &'static str,
    pub got: f64,
    pub published: f64,
    pub tol: f64,
}

impl Reproduced {
    pub fn ok(&self) -> bool {
        (self.got - self.published).abs() <= self.tol
    }
}

fn mean_of(row: &[f64], subset: &ClassSet) -> f64 {
    let ious: Vec<Option<f64>> = row.iter().map(|&v| Some(v)).collect();
    miou(&ious, subset).expect("non-empty subset")
}

pub fn reproduce_all() -> Vec<Reproduced> {
    let gap = gap_report(GAP.0, GAP.1, GAP.2).expect("gap is defined");
    vec![
        Reproduced {
            what: "mIoU19 GTA5 row",
            got: mean_of(&GTA_OURS, &ClassSet::all(19)),
            published: 50.1,
            tol: 0.05,
        },
        Reproduced {
            what: "mIoU16 SYNTHIA row",
            got: mean_of(&SYNTHIA_OURS, &ClassSet::all(16)),
            published: 42.7,
            tol: 0.05,
        },
        Reproduced {
            what: "mIoU13 SYNTHIA row",
            got: mean_of(&SYNTHIA_OURS, &ClassSet::excluding(16, &SYNTHIA_STARRED).unwrap()),
            published: 49.8,
            tol: 0.05,
        },
        Reproduced {
            what: "gap closed",
            got: gap.closed_gap_pct,
            published: 68.3,
            tol: 0.1,
        },
        Reproduced {
            what: "gap remaining",
            got: gap.remaining_gap_pct,
            published: 31.7,
            tol: 0.1,
        },
    ]
}
