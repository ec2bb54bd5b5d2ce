"""Relaxed SDP for worst-case secrecy rate under per-AP power and harvested-energy constraints."""
