use proxyforge::pareto::*;
use proxyforge::proxy::*;
use proxyforge::simulator::*;
fn main() {
    let m: usize = std::env::args().nth(1).unwrap().parse().unwrap();
    let budget: usize = std::env::args().nth(2).unwrap().parse().unwrap();
    let panel = simulate_panel(&preset("insensitive_ns", 300, 100, m, std::env::args().nth(3).unwrap().parse().unwrap()).unwrap()).unwrap().0;
    let ev = ProxyEvaluator::new(&panel, ObjectiveConfig::default()).unwrap();
    let ids = panel.metric_ids().to_vec();
    let bins = default_bins(&ev, 14).unwrap();
    let b = binned_search(&ev, &ids, &bins, budget).unwrap();
    let r = random_search(&ev, &ids, 4000 * m as u64, 20_240_601, 10000).unwrap();
    println!("binned {:.4} random {:.4}", b.aupf([0.0,0.0]), r.aupf([0.0,0.0]));
    for o in &b.bins { println!("bin {} [{:.3},{:.3}) {:?}", o.bin, o.lower, o.upper, o.best.as_ref().map(|e| (e.sensitivity, e.directionality))); }
    for e in &r.entries { println!("R {:.4} {:.4}", e.sensitivity, e.directionality); }
    let pair = { let mut w = vec![0.0; m]; w[1]=1.0; w[2]=1.0; ev.evaluate_raw(&w).unwrap() };
    println!("pair {:?}", pair);
}
