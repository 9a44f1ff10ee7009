#pragma once

#include <functional>
#include <pthread.h>
#include <stdexcept>

namespace pl9 {

// Runs fn on a thread with a large stack. Deeply recursive interpretation
// (long lowered loops, deep tabled call chains) outgrows the default stack.
inline void run_with_big_stack(const std::function<void()>& fn,
                               size_t stack_bytes = size_t{512} * 1024 * 1024) {
    struct Ctx {
        const std::function<void()>* fn;
        std::exception_ptr err;
    } ctx{&fn, nullptr};

    pthread_attr_t attr;
    pthread_attr_init(&attr);
    pthread_attr_setstacksize(&attr, stack_bytes);
    pthread_t tid;
    auto tramp = [](void* p) -> void* {
        Ctx* c = static_cast<Ctx*>(p);
        try {
            (*c->fn)();
        } catch (...) {
            c->err = std::current_exception();
        }
        return nullptr;
    };
    if (pthread_create(&tid, &attr, tramp, &ctx) != 0) {
        pthread_attr_destroy(&attr);
        fn();  // fall back to the current stack
        return;
    }
    pthread_join(tid, nullptr);
    pthread_attr_destroy(&attr);
    if (ctx.err) std::rethrow_exception(ctx.err);
}

}  // namespace pl9
