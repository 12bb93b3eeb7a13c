use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PortError {
    #[error("port {port} for robot {robot} exceeds 65535")]
    PortRangeExceeded { robot: usize, port: u64 },
    #[error("robot {0} already has a port block")]
    DuplicateAllocation(usize),
    #[error("stride {0} is smaller than the 3 ports of a block")]
    StrideTooSmall(u16),
}

/// The three channels of one robot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PortBlock {
    /// Simulator to autopilot sensor frames.
    pub fdm_state: u16,
    /// Autopilot to simulator actuator frames.
    pub fdm_cmd: u16,
    /// Autopilot to ground-station proxy.
    pub gcs_link: u16,
}

impl PortBlock {
    pub fn ports(&self) -> [u16; 3] {
        [self.fdm_state, self.fdm_cmd, self.gcs_link]
    }
}

pub const DEFAULT_BASE: u16 = 9000;
pub const DEFAULT_STRIDE: u16 = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortRegistry {
    base: u16,
    stride: u16,
    allocations: BTreeMap<usize, PortBlock>,
}

impl Default for PortRegistry {
    fn default() -> Self {
        Self::new(DEFAULT_BASE, DEFAULT_STRIDE).expect("default stride is valid")
    }
}

impl PortRegistry {
    pub fn new(base: u16, stride: u16) -> Result<Self, PortError> {
        if stride < 3 {
            return Err(PortError::StrideTooSmall(stride));
        }
        Ok(Self { base, stride, allocations: BTreeMap::new() })
    }

    pub fn base(&self) -> u16 {
        self.base
    }

    pub fn stride(&self) -> u16 {
        self.stride
    }

    /// Block `i` is `base + stride·i + {0, 1, 2}`.
    pub fn allocate(&mut self, robot_index: usize) -> Result<PortBlock, PortError> {
        if self.allocations.contains_key(&robot_index) {
            return Err(PortError::DuplicateAllocation(robot_index));
        }
        let start = self.base as u64 + self.stride as u64 * robot_index as u64;
        let last = start + 2;
        if last > u16::MAX as u64 {
            return Err(PortError::PortRangeExceeded { robot: robot_index, port: last });
        }
        let block = PortBlock { fdm_state: start as u16, fdm_cmd: start as u16 + 1, gcs_link: start as u16 + 2 };
        self.allocations.insert(robot_index, block);
        Ok(block)
    }

    pub fn get(&self, robot_index: usize) -> Option<&PortBlock> {
        self.allocations.get(&robot_index)
    }

    pub fn allocations(&self) -> &BTreeMap<usize, PortBlock> {
        &self.allocations
    }

    /// True if `port` belongs to any allocated block.
    pub fn owns(&self, port: u16) -> bool {
        self.allocations.values().any(|b| b.ports().contains(&port))
    }
}

pub fn allocate_ports(registry: &mut PortRegistry, robot_index: usize) -> Result<PortBlock, PortError> {
    registry.allocate(robot_index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn formula() {
        let mut r = PortRegistry::default();
        assert_eq!(r.allocate(0).unwrap(), PortBlock { fdm_state: 9000, fdm_cmd: 9001, gcs_link: 9002 });
        assert_eq!(r.allocate(3).unwrap(), PortBlock { fdm_state: 9030, fdm_cmd: 9031, gcs_link: 9032 });
        assert_eq!(r.allocate(3), Err(PortError::DuplicateAllocation(3)));
        assert!(matches!(r.allocate(5700), Err(PortError::PortRangeExceeded { robot: 5700, .. })));
        assert_eq!(PortRegistry::new(9000, 2), Err(PortError::StrideTooSmall(2)));
    }

    #[test]
    fn last_fitting_block() {
        let mut r = PortRegistry::new(65530, 3).unwrap();
        assert_eq!(r.allocate(1).unwrap().gcs_link, 65535);
        assert!(r.allocate(2).is_err());
    }

    proptest! {
        #[test]
        fn blocks_are_disjoint(base in 1024u16..20000, stride in 3u16..40,
                               idx in proptest::collection::hash_set(0usize..1000, 1..40)) {
            let mut r = PortRegistry::new(base, stride).unwrap();
            let mut seen = HashSet::new();
            for i in idx {
                let b = r.allocate(i).unwrap();
                for p in b.ports() {
                    prop_assert!(seen.insert(p), "port {} reused", p);
                }
            }
        }
    }
}
