class Counter {
    int total;
    int step;
    int floor;
    int ceiling;
    int snap(int value) {
        return value;
    }
    int bump(int amount) {
        int next;
        next = total + amount;
        if (next > ceiling) {
            return ceiling;
        }
        return next;
    }

    int idle;
    int reset() {
        total = floor;
        return total;
    }
}
