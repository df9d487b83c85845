/// Product basis of N emitters split into sectors of fixed excitation
/// number. Every operator used here conserves or lowers the excitation number.
#[derive(Debug, Clone)]
pub struct ExcitationBasis {
    n: usize,
    sectors: Vec<Vec<u32>>,
    index: Vec<u32>,
}

impl ExcitationBasis {
    pub fn new(n: usize) -> Self {
        assert!(n <= 24, "basis limited to 24 emitters");
        let dim = 1usize << n;
        let mut sectors = vec![Vec::new(); n + 1];
        let mut index = vec![0u32; dim];
        for mask in 0..dim as u32 {
            let k = mask.count_ones() as usize;
            index[mask as usize] = sectors[k].len() as u32;
            sectors[k].push(mask);
        }
        Self { n, sectors, index }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Basis states with exactly `k` excitations, in increasing mask order.
    pub fn sector(&self, k: usize) -> &[u32] {
        &self.sectors[k]
    }

    /// Position of `mask` within its own sector.
    pub fn position(&self, mask: u32) -> usize {
        self.index[mask as usize] as usize
    }
}
