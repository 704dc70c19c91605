#include "ganloc/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace ganloc::loss {

namespace {
void check_probs(const std::vector<double>& p, const char* what) {
    if (p.empty()) throw std::domain_error(std::string(what) + ": empty probability vector");
    for (double v : p)
        if (!(v > 0.0 && v < 1.0))
            throw std::domain_error(std::string(what) + ": probability outside (0,1)");
}
} // namespace

double d_loss_ns(const std::vector<double>& real_probs, const std::vector<double>& fake_probs) {
    check_probs(real_probs, "d_loss_ns real");
    check_probs(fake_probs, "d_loss_ns fake");
    double a = 0, b = 0;
    for (double p : real_probs) a += std::log(p);
    for (double p : fake_probs) b += std::log(1.0 - p);
    return -a / static_cast<double>(real_probs.size()) - b / static_cast<double>(fake_probs.size());
}

double g_loss_minimax(const std::vector<double>& fake_probs) {
    check_probs(fake_probs, "g_loss_minimax");
    double s = 0;
    for (double p : fake_probs) s += std::log(1.0 - p);
    return s / static_cast<double>(fake_probs.size());
}

double g_loss_ns(const std::vector<double>& fake_probs) {
    check_probs(fake_probs, "g_loss_ns");
    double s = 0;
    for (double p : fake_probs) s += std::log(p);
    return -s / static_cast<double>(fake_probs.size());
}

std::pair<double, double> wgan_losses(const std::vector<double>& real_scores,
                                      const std::vector<double>& fake_scores) {
    if (real_scores.empty() || fake_scores.empty())
        throw std::invalid_argument("wgan_losses: empty score vector");
    double mr = 0, mf = 0;
    for (double v : real_scores) mr += v;
    for (double v : fake_scores) mf += v;
    mr /= static_cast<double>(real_scores.size());
    mf /= static_cast<double>(fake_scores.size());
    return {mf - mr, -mf};
}

LossRecipe assemble_objectives(const GanConfig& config) {
    config.validate();
    switch (config.variant) {
        case Variant::dcgan:
        case Variant::sn_dcgan:
            return {DLossKind::non_saturating, GLossKind::non_saturating, PenaltyMode::none, 0.0};
        case Variant::dragan:
            return {DLossKind::non_saturating, GLossKind::non_saturating, PenaltyMode::perturb,
                    config.penalty_weight};
        case Variant::wgan_gp:
        case Variant::sn_wgan_gp:
            return {DLossKind::wasserstein, GLossKind::wasserstein, PenaltyMode::interpolate,
                    config.penalty_weight};
    }
    throw std::invalid_argument("assemble_objectives: unknown variant");
}

} // namespace ganloc::loss
