#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use sagin::cached::{CachedInstance, CachedRequest, Candidate};
use sagin::noncached::{NonCachedInstance, RelayLink, RelayNode, RelayRequest};

/// Random cached instance over `sats` satellites. Requesters are drawn from
/// the same pool as holders, so budgets are shared the way they are in a
/// slot. At most `max_pairs` candidate pairs in total. A request left with
/// no candidate sees a GS, so every request is servable.
pub fn cached_instance<R: Rng>(rng: &mut R, sats: usize, requests: usize, max_pairs: usize) -> CachedInstance {
    let mut out = Vec::with_capacity(requests);
    let mut pairs = 0;
    for _ in 0..requests {
        let requester = rng.random_range(0..sats);
        let want = rng.random_range(1..=3usize).min(max_pairs - pairs);
        let mut candidates = Vec::new();
        for _ in 0..want {
            let sat = rng.random_range(0..sats);
            if sat == requester || candidates.iter().any(|c: &Candidate| c.sat == sat) {
                continue;
            }
            candidates.push(Candidate {
                sat,
                capacity_bps: rng.random_range(2e8..1e9),
                distance_m: rng.random_range(5e5..4e6),
            });
        }
        pairs += candidates.len();
        let sees_gs = candidates.is_empty() || rng.random_bool(0.3);
        out.push(CachedRequest {
            requester,
            bits: rng.random_range(1e5..3e6),
            candidates,
            gs_capacity_bps: if sees_gs { rng.random_range(5e8..1.5e9) } else { 0.0 },
            gs_distance_m: if sees_gs { rng.random_range(1e6..2.5e6) } else { 0.0 },
        });
        if pairs >= max_pairs {
            break;
        }
    }
    CachedInstance {
        requests: out,
        max_isl: rng.random_range(1..=3),
        consumed: BTreeMap::new(),
    }
}

/// Random relay instance: `relays` GS-visible satellites split over two
/// GSs and `requests` requesters with one to three relay paths each.
pub fn noncached_instance<R: Rng>(rng: &mut R, relays: usize, requests: usize, max_isl: usize) -> NonCachedInstance {
    let nodes: Vec<RelayNode> = (0..relays)
        .map(|k| RelayNode {
            sat: k,
            gs: k % 2,
            snr_const: 10f64.powf(rng.random_range(0.5..3.0)),
            gs_distance_m: rng.random_range(1e6..2.5e6),
        })
        .collect();
    let relayed = (0..requests)
        .map(|j| {
            let want = rng.random_range(1..=3usize.min(relays));
            let mut links: Vec<RelayLink> = Vec::new();
            while links.len() < want {
                let relay = rng.random_range(0..relays);
                if links.iter().all(|l| l.relay != relay) {
                    links.push(RelayLink {
                        relay,
                        isl_capacity_bps: rng.random_range(2e8..1e9),
                        isl_distance_m: rng.random_range(5e5..4e6),
                    });
                }
            }
            RelayRequest {
                requester: 100 + j,
                bits: rng.random_range(1e5..3e6),
                links,
            }
        })
        .collect();
    NonCachedInstance {
        relays: nodes,
        relayed,
        direct: Vec::new(),
        bandwidth_hz: 1e8,
        max_isl,
        consumed: BTreeMap::new(),
    }
}
