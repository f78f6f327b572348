//! Cluster colors shared by the map, timeline, distribution and overlays.

use std::fmt;

/// Twelve base colors, assigned in cluster-id order.
pub const BASE_PALETTE: [Rgb; 12] = [
    Rgb(0xE6, 0x19, 0x4B), // #E6194B red
    Rgb(0x3C, 0xB4, 0x4B), // #3CB44B green
    Rgb(0x43, 0x63, 0xD8), // #4363D8 blue
    Rgb(0xF5, 0x82, 0x31), // #F58231 orange
    Rgb(0x91, 0x1E, 0xB4), // #911EB4 purple
    Rgb(0x42, 0xD4, 0xF4), // #42D4F4 cyan
    Rgb(0xF0, 0x32, 0xE6), // #F032E6 magenta
    Rgb(0xBF, 0xEF, 0x45), // #BFEF45 lime
    Rgb(0x46, 0x99, 0x90), // #469990 teal
    Rgb(0x9A, 0x63, 0x24), // #9A6324 brown
    Rgb(0x80, 0x00, 0x00), // #800000 maroon
    Rgb(0x00, 0x00, 0x75), // #000075 navy
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Rgb(pub u8, pub u8, pub u8);

impl Rgb {
    pub fn hex(&self) -> String {
        format!("#{:02X}{:02X}{:02X}", self.0, self.1, self.2)
    }

    /// Hex without the leading `#`, as LaTeX's `HTML` color model wants it.
    pub fn hex_bare(&self) -> String {
        format!("{:02X}{:02X}{:02X}", self.0, self.1, self.2)
    }

    pub fn to_array(self) -> [u8; 3] {
        [self.0, self.1, self.2]
    }
}

impl fmt::Display for Rgb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.hex())
    }
}

/// Color of cluster `id`. Past the twelfth cluster the palette cycles, each
/// cycle alternately lightened and darkened further.
pub fn cluster_color(id: usize) -> Rgb {
    let base = BASE_PALETTE[id % BASE_PALETTE.len()];
    let cycle = id / BASE_PALETTE.len();
    if cycle == 0 {
        return base;
    }
    let step = cycle.div_ceil(2) as f64;
    let amount = 1.0 - 0.7f64.powf(step);
    let shift = |c: u8| -> u8 {
        let c = c as f64;
        let v = if cycle % 2 == 1 {
            c + (255.0 - c) * amount
        } else {
            c * (1.0 - amount)
        };
        v.round().clamp(0.0, 255.0) as u8
    };
    Rgb(shift(base.0), shift(base.1), shift(base.2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn documented_hex_values() {
        assert_eq!(cluster_color(0).hex(), "#E6194B");
        assert_eq!(cluster_color(11).hex(), "#000075");
    }

    #[test]
    fn distinct_for_a_large_report() {
        let colors: HashSet<Rgb> = (0..72).map(cluster_color).collect();
        assert_eq!(colors.len(), 72);
    }

    #[test]
    fn stable() {
        assert_eq!(cluster_color(13), cluster_color(13));
        assert_ne!(cluster_color(13), cluster_color(1));
    }
}
