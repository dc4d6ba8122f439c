//! The simulated network by itself: datagrams suffer loss, reliable
//! messages keep their order, and partitions drop everything across them.

use std::collections::BTreeSet;

use edgefs::metadata::NodeId;
use edgefs::simnet::{Channel, NetConfig, PartitionState, SimEvent, SimNet};

pub fn run_example() -> (edgefs::simnet::NetStats, Vec<u8>) {
    let config = NetConfig { seed: 42, delay_min: 1, delay_max: 6, loss_probability: 0.3, ..NetConfig::default() };
    let mut net = SimNet::new(config).unwrap();
    let (a, b, c) = (NodeId(0), NodeId(1), NodeId(2));

    for i in 0..100u8 {
        net.send(a, b, Channel::Datagram, [b"ping".as_slice(), &[i]].concat());
    }
    for i in 0..10u8 {
        net.send(a, b, Channel::Reliable, [b"data".as_slice(), &[i]].concat());
    }
    net.set_partition(PartitionState::split(vec![BTreeSet::from([a, b]), BTreeSet::from([c])]));
    net.send(a, c, Channel::Reliable, b"dataX".to_vec());

    let mut reliable_order = Vec::new();
    while let Some((_, event)) = net.pop() {
        if let SimEvent::Deliver(env) = event {
            if &env.protocol_tag == b"data" {
                reliable_order.push(env.payload[4]);
            }
        }
    }
    (net.stats(), reliable_order)
}

#[allow(dead_code)]
fn main() {
    let (stats, order) = run_example();
    println!("{stats:?}");
    println!("reliable arrival order: {order:?}");
}
