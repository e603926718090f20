#include "cfn/kernels.hpp"

#include <atomic>
#include <cstdlib>

namespace cfn::kern {
namespace {

const Ops* resolve(const std::string& name) {
    if (name == "scalar") return &scalar_ops();
    if (name == "avx2") return avx2_ops();
    if (name == "neon") return neon_ops();
    if (name == "auto" || name.empty()) {
        if (const Ops* o = avx2_ops()) return o;
        if (const Ops* o = neon_ops()) return o;
        return &scalar_ops();
    }
    return nullptr;
}

std::atomic<const Ops*>& slot() {
    static std::atomic<const Ops*> current{[] {
        const char* env = std::getenv("CFNID_KERNELS");
        const Ops* o = resolve(env ? env : "auto");
        return o ? o : &scalar_ops();
    }()};
    return current;
}

}  // namespace

const Ops& active() { return *slot().load(std::memory_order_relaxed); }

bool select_backend(const std::string& name) {
    const Ops* o = resolve(name);
    if (!o) return false;
    slot().store(o, std::memory_order_relaxed);
    return true;
}

}  // namespace cfn::kern
