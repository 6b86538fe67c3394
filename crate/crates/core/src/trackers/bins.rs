use crate::datamodel::RegionId;

/// Number of logarithmic price bins.
pub const PRICE_BINS: u64 = 7;

/// `clamp(floor(log10(price)), 0, PRICE_BINS - 1)`; zero, negative or
/// non-finite prices have no bin.
pub fn price_bin(price: f64) -> Option<u64> {
    if !(price > 0.0) || !price.is_finite() {
        return None;
    }
    let raw = price.log10().floor();
    // log10 can round across an integer near exact powers of ten.
    let mut bin = raw.max(0.0) as u64;
    if bin > 0 && 10f64.powi(bin as i32) > price {
        bin -= 1;
    } else if bin + 1 < PRICE_BINS && 10f64.powi(bin as i32 + 1) <= price {
        bin += 1;
    }
    Some(bin.min(PRICE_BINS - 1))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RegionBin {
    BinA = 0,
    BinB = 1,
    Other = 2,
}

/// Two distinguished regions; everything else falls into `Other`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RegionBins {
    pub bin_a: Option<RegionId>,
    pub bin_b: Option<RegionId>,
}

impl RegionBins {
    pub fn new(bin_a: RegionId, bin_b: RegionId) -> Self {
        RegionBins {
            bin_a: Some(bin_a),
            bin_b: Some(bin_b),
        }
    }

    pub fn bin(&self, region: RegionId) -> RegionBin {
        if self.bin_a == Some(region) {
            RegionBin::BinA
        } else if self.bin_b == Some(region) {
            RegionBin::BinB
        } else {
            RegionBin::Other
        }
    }
}
