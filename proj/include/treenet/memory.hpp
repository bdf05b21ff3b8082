#ifndef TREENET_MEMORY_HPP
#define TREENET_MEMORY_HPP

#include <atomic>
#include <cstddef>
#include <new>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace treenet {

/// Process-wide byte counter for tensor storage. Every Tensor allocates
/// through TrackingAllocator, so the high-water mark reflects activations,
/// gradients, parameters and convolution scratch buffers.
class MemoryTracker {
public:
    static MemoryTracker& instance()
    {
        static MemoryTracker tracker;
        return tracker;
    }

    void on_allocate(std::size_t bytes) noexcept
    {
        const std::size_t now = current_.fetch_add(bytes, std::memory_order_relaxed) + bytes;
        std::size_t seen = peak_.load(std::memory_order_relaxed);
        while (now > seen && !peak_.compare_exchange_weak(seen, now, std::memory_order_relaxed)) {
        }
    }

    void on_release(std::size_t bytes) noexcept { current_.fetch_sub(bytes, std::memory_order_relaxed); }

    std::size_t current() const noexcept { return current_.load(std::memory_order_relaxed); }
    std::size_t peak() const noexcept { return peak_.load(std::memory_order_relaxed); }

    /// Restart the high-water mark from the current live byte count.
    void reset_peak() noexcept { peak_.store(current(), std::memory_order_relaxed); }

private:
    MemoryTracker() = default;

    std::atomic<std::size_t> current_{0};
    std::atomic<std::size_t> peak_{0};
};

namespace detail {

// Large tensors are allocated and freed every step; keeping them on the
// heap instead of fresh mmap()s avoids repeated page faults.
inline bool tune_heap() noexcept
{
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 512 << 20);
    mallopt(M_TRIM_THRESHOLD, 1024 << 20);
#endif
    return true;
}

inline const bool heap_tuned = tune_heap();

} // namespace detail

template <typename T>
struct TrackingAllocator {
    using value_type = T;

    TrackingAllocator() noexcept = default;
    template <typename U>
    TrackingAllocator(const TrackingAllocator<U>&) noexcept
    {
    }

    T* allocate(std::size_t n)
    {
        const std::size_t bytes = n * sizeof(T);
        T* p = static_cast<T*>(::operator new(bytes, std::align_val_t{64}));
        MemoryTracker::instance().on_allocate(bytes);
        return p;
    }

    void deallocate(T* p, std::size_t n) noexcept
    {
        ::operator delete(p, std::align_val_t{64});
        MemoryTracker::instance().on_release(n * sizeof(T));
    }

    template <typename U>
    bool operator==(const TrackingAllocator<U>&) const noexcept
    {
        return true;
    }
};

} // namespace treenet

#endif // TREENET_MEMORY_HPP
