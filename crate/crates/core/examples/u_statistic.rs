//! U-statistic estimates of MMD and KSD on one simulated sample.

use hidim_ustat::kernels::Kernel;
use hidim_ustat::model::{CovSpec, MeanShiftModel, RngStream};
use hidim_ustat::ustat::{u_statistic, PairedSample, SummandSpec};

fn main() -> hidim_ustat::Result<()> {
    let (d, n) = (50, 100);
    let model = MeanShiftModel::first_coordinate(d, 1.5, CovSpec::Identity)?;
    let stream = RngStream::new(20240, 0, 0);

    let mmd = SummandSpec::Mmd { kernel: Kernel::Rbf { gamma: d as f64 } };
    let data = PairedSample::draw(&mmd, &model, n, stream)?;
    println!("MMD-RBF  D_n = {:.6}", u_statistic(&mmd, &data)?);

    let lin = SummandSpec::Mmd { kernel: Kernel::Linear };
    println!("MMD-lin  D_n = {:.6}  (population value {:.2})", u_statistic(&lin, &data)?, 1.5f64 * 1.5);

    // KSD against the standard normal target, sample drawn from the shifted model
    let ksd = SummandSpec::ksd(d as f64, model.null())?;
    let data = PairedSample::draw(&ksd, &model, n, stream.derive(1))?;
    println!("KSD-RBF  D_n = {:.6}", u_statistic(&ksd, &data)?);
    Ok(())
}
